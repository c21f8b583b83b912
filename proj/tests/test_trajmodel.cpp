#include <cmath>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "koopctl/trajmodel.hpp"
#include "oracles/random_sets.hpp"

using namespace koopctl;

namespace {

const std::string kMinimal =
    R"({"format":"koopctl-traj-v1","env":{"name":"cartpole","state_dim":4,"action_count":2,"state_labels":["x","v","th","w"]}})"
    "\n"
    R"({"checkpoint":3,"seed":7,"reward":2,"states":[[0,0,0,0],[0.1,0.2,0.3,0.4],[1,2,3,4]],"actions":[0,1]})"
    "\n";

std::string with_trial(const std::string& trial) {
  return kMinimal.substr(0, kMinimal.find('\n') + 1) + trial + "\n";
}

TrajectorySet constant_set(double c, std::size_t n) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(5, 2, c);
  std::vector<Trajectory> t;
  for (std::size_t i = 0; i < n; ++i) t.emplace_back(s, std::vector<int>{0, 1, 0, 1}, 1.0, 0, 0);
  return {EnvSpec("c", 2, 2, {"a", "b"}), t};
}

} // namespace

TEST(Parse, MinimalFile) {
  const auto set = parse_trajectory_file(kMinimal);
  ASSERT_EQ(set.size(), 1u);
  const auto& t = set.trajectories()[0];
  EXPECT_EQ(t.length(), 3u);
  EXPECT_EQ(t.transitions(), 2u);
  EXPECT_EQ(t.checkpoint(), 3);
  EXPECT_EQ(t.seed(), 7);
  EXPECT_EQ(t.total_reward(), 2.0);
  EXPECT_EQ(set.env().state_dim(), 4u);
  EXPECT_EQ(set.env().action_count(), 2u);
  EXPECT_EQ(t.states()(1, 2), 0.3);
}

TEST(Parse, ActionOutOfRangeNamesRecord) {
  const auto bad = with_trial(R"({"checkpoint":0,"seed":0,"reward":0,"states":[[0,0,0,0],[1,1,1,1]],"actions":[2]})");
  try {
    parse_trajectory_file(bad);
    FAIL() << "expected an error";
  } catch (const validation_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("out of range"), std::string::npos) << msg;
  }
}

TEST(Parse, RejectsMalformedInput) {
  EXPECT_THROW(parse_trajectory_file(""), validation_error);
  EXPECT_THROW(parse_trajectory_file(kMinimal.substr(0, kMinimal.find('\n') + 1)), validation_error);
  EXPECT_THROW(parse_trajectory_file(with_trial("{not json")), validation_error);
  // Row width differs from state_dim.
  EXPECT_THROW(parse_trajectory_file(with_trial(
                   R"({"checkpoint":0,"seed":0,"reward":0,"states":[[0,0,0],[1,1,1]],"actions":[0]})")),
               validation_error);
  // T - 1 actions required.
  EXPECT_THROW(parse_trajectory_file(with_trial(
                   R"({"checkpoint":0,"seed":0,"reward":0,"states":[[0,0,0,0],[1,1,1,1]],"actions":[0,1]})")),
               validation_error);
  // A single state has no transition.
  EXPECT_THROW(parse_trajectory_file(
                   with_trial(R"({"checkpoint":0,"seed":0,"reward":0,"states":[[0,0,0,0]],"actions":[]})")),
               validation_error);
  // JSON has no literal for non-finite numbers; an overflowing literal is rejected.
  EXPECT_THROW(parse_trajectory_file(with_trial(
                   R"({"checkpoint":0,"seed":0,"reward":0,"states":[[1e999,0,0,0],[1,1,1,1]],"actions":[0]})")),
               validation_error);
  // Wrong format tag.
  std::string wrong = kMinimal;
  wrong.replace(wrong.find("traj-v1"), 7, "traj-v9");
  EXPECT_THROW(parse_trajectory_file(wrong), validation_error);
}

TEST(Parse, ErrorLineNumberPointsAtRecord) {
  std::string text = kMinimal;
  text += R"({"checkpoint":0,"seed":0,"reward":0,"states":[[0,0,0,0],[1,1,1,1]],"actions":[0]})" "\n";
  text += R"({"checkpoint":0,"seed":0,"reward":"x","states":[[0,0,0,0],[1,1,1,1]],"actions":[0]})" "\n";
  try {
    parse_trajectory_file(text);
    FAIL();
  } catch (const validation_error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 4:", 0), 0u) << e.what();
  }
}

TEST(Serialize, OneTrajectoryGivesTwoRecords) {
  const auto set = parse_trajectory_file(kMinimal);
  const auto text = serialize_trajectory_file(set);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Serialize, CanonicalTextIsAFixedPoint) {
  // The minimal file above is written in canonical form already.
  const auto set = parse_trajectory_file(kMinimal);
  EXPECT_EQ(serialize_trajectory_file(set), kMinimal);
}

TEST(Serialize, NonCanonicalInputCanonicalizes) {
  const std::string loose =
      R"({"env":{"state_labels":["x","v","th","w"],"action_count":2,"state_dim":4,"name":"cartpole"},"format":"koopctl-traj-v1"})"
      "\n"
      R"({"actions":[0,1],"states":[[0.0,0,-0.0,0],[1.0e-1,0.2,0.30,0.4],[1,2,3,4]],"reward":2.0,"seed":7,"checkpoint":3})"
      "\r\n";
  const auto set = parse_trajectory_file(loose);
  EXPECT_EQ(serialize_trajectory_file(set), kMinimal);
}

TEST(Serialize, EmptyListFailsAtConstruction) {
  EXPECT_THROW(TrajectorySet(EnvSpec("e", 1, 2, {"a"}), {}), validation_error);
}

TEST(RoundTrip, RandomSets) {
  std::mt19937_64 rng(20240611);
  for (int rep = 0; rep < 20; ++rep) {
    const auto set = oracle::random_set(rng, 50, 1 + rep % 6, 2 + rep % 3);
    const auto text = serialize_trajectory_file(set);
    const auto back = parse_trajectory_file(text);
    EXPECT_EQ(back, set);
    EXPECT_EQ(serialize_trajectory_file(back), text);
  }
}

TEST(RoundTrip, ExtremeMagnitudesSurviveBitExactly) {
  Eigen::MatrixXd s(2, 3);
  s << 5e-324, 1.7976931348623157e308, 0.1, -2.2250738585072014e-308, 1.0 / 3.0, -123456789.123456789;
  TrajectorySet set(EnvSpec("e", 3, 2, {"a", "b", "c"}), {Trajectory(s, {1}, -0.5, 0, 0)});
  const auto back = parse_trajectory_file(serialize_trajectory_file(set));
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(back.trajectories()[0].states()(i, j), s(i, j));
}

TEST(OneHot, PaperExamples) {
  EXPECT_EQ(one_hot_encode(0, 2), (Eigen::VectorXd(2) << 1, 0).finished());
  EXPECT_EQ(one_hot_encode(1, 2), (Eigen::VectorXd(2) << 0, 1).finished());
  EXPECT_EQ(one_hot_encode(2, 4), (Eigen::VectorXd(4) << 0, 0, 1, 0).finished());
}

TEST(OneHot, SumsToOneWithSingleNonzero) {
  for (std::size_t q = 1; q <= 6; ++q) {
    for (int a = 0; a < static_cast<int>(q); ++a) {
      const auto u = one_hot_encode(a, q);
      EXPECT_EQ(u.sum(), 1.0);
      EXPECT_EQ((u.array() != 0.0).count(), 1);
    }
  }
  EXPECT_THROW(one_hot_encode(2, 2), validation_error);
  EXPECT_THROW(one_hot_encode(-1, 2), validation_error);
}

TEST(Scaling, ConstantDataHasUnitScale) {
  const auto p = fit_scaling(constant_set(3.7, 4));
  EXPECT_EQ(p.mean, Eigen::Vector2d(3.7, 3.7));
  EXPECT_EQ(p.scale, Eigen::Vector2d(1, 1));
}

TEST(Scaling, SymmetricPlusMinusOne) {
  Eigen::MatrixXd s(4, 1);
  s << -1, 1, -1, 1;
  TrajectorySet set(EnvSpec("e", 1, 2, {"a"}), {Trajectory(s, {0, 0, 0}, 0, 0, 0)});
  const auto p = fit_scaling(set);
  EXPECT_EQ(p.mean(0), 0.0);
  EXPECT_EQ(p.scale(0), 1.0);
}

TEST(Scaling, GaussianParametersRecovered) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> a(3.0, 2.0), b(-50.0, 0.5);
  Eigen::MatrixXd s(10000, 2);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) << a(rng), b(rng);
  TrajectorySet set(EnvSpec("e", 2, 2, {"a", "b"}), {Trajectory(s, std::vector<int>(9999, 0), 0, 0, 0)});
  const auto p = fit_scaling(set);
  EXPECT_NEAR(p.mean(0), 3.0, 0.05 * 3.0);
  EXPECT_NEAR(p.mean(1), -50.0, 0.05 * 50.0);
  EXPECT_NEAR(p.scale(0), 2.0, 0.05 * 2.0);
  EXPECT_NEAR(p.scale(1), 0.5, 0.05 * 0.5);
}

TEST(Scaling, NormalizedVarianceIsOne) {
  std::mt19937_64 rng(5);
  const auto set = oracle::random_set(rng, 30, 4, 2, 40);
  const auto p = fit_scaling(set);
  const auto scaled = apply_scaling(set, p);
  for (Eigen::Index j = 0; j < 4; ++j) {
    double sum = 0, sq = 0, n = 0;
    for (const auto& t : scaled.trajectories()) {
      sum += t.states().col(j).sum();
      n += static_cast<double>(t.length());
    }
    const double mean = sum / n;
    for (const auto& t : scaled.trajectories()) sq += (t.states().col(j).array() - mean).square().sum();
    if (p.scale(j) != 1.0) EXPECT_NEAR(sq / n, 1.0, 1e-9);
  }
}

TEST(Scaling, IdentityAndInverse) {
  std::mt19937_64 rng(17);
  auto set = oracle::random_set(rng, 10, 3, 2);
  // Keep magnitudes moderate so the absolute 1e-12 bound is meaningful.
  std::vector<Trajectory> tame;
  std::uniform_real_distribution<double> u(-10, 10);
  for (const auto& t : set.trajectories()) {
    Eigen::MatrixXd s = t.states();
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
    tame.emplace_back(s, t.actions(), t.total_reward(), t.checkpoint(), t.seed());
  }
  const TrajectorySet moderate(set.env(), tame);
  EXPECT_EQ(apply_scaling(moderate, ScalingParams::identity(3)), moderate);
  const auto p = fit_scaling(moderate);
  const auto back = unapply_scaling(apply_scaling(moderate, p), p);
  for (std::size_t k = 0; k < moderate.size(); ++k) {
    const double err = (back.trajectories()[k].states() - moderate.trajectories()[k].states()).cwiseAbs().maxCoeff();
    EXPECT_LE(err, 1e-12);
    EXPECT_EQ(back.trajectories()[k].actions(), moderate.trajectories()[k].actions());
    EXPECT_EQ(back.trajectories()[k].total_reward(), moderate.trajectories()[k].total_reward());
  }
  EXPECT_THROW(apply_scaling(moderate, ScalingParams::identity(2)), validation_error);
}

TEST(Trajectory, TransitionBookkeeping) {
  std::mt19937_64 rng(3);
  const auto set = oracle::random_set(rng, 25, 2, 3, 30);
  for (const auto& t : set.trajectories()) EXPECT_EQ(t.transitions(), t.length() - 1);
}
