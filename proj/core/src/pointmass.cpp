#include <algorithm>
#include <cmath>

#include "metaexp/env.hpp"

namespace metaexp::env {

std::pair<double, double> pointmass_corner(std::uint64_t layout_seed) {
  switch (layout_seed % 4) {
    case 0: return {1.0, 1.0};
    case 1: return {-1.0, 1.0};
    case 2: return {-1.0, -1.0};
    default: return {1.0, -1.0};
  }
}

namespace {

class PointmassEnv final : public Env {
 public:
  PointmassEnv(TaskSpec spec, PointmassConfig cfg) : spec_(spec), cfg_(cfg) {
    spec_.validate();
    std::tie(goal_x_, goal_y_) = pointmass_corner(spec_.layout_seed);
  }

  std::vector<double> reset(Rng&) override {
    x_ = 0.0;  // fixed center start; the task varies only through the corner
    y_ = 0.0;
    done_ = false;
    info_ = EpisodeInfo{};
    return {x_, y_};
  }

  StepResult step(int action) override {
    check(!done_, "PointmassEnv::step: episode already finished");
    check(action >= 0 && action < 4, "PointmassEnv::step: action out of range");
    ++info_.steps;
    const int a = spec_.dynamics_perm[static_cast<std::size_t>(action)];
    switch (a) {
      case 0: y_ += cfg_.step; break;
      case 1: x_ += cfg_.step; break;
      case 2: y_ -= cfg_.step; break;
      default: x_ -= cfg_.step; break;
    }
    x_ = std::clamp(x_, -1.0, 1.0);
    y_ = std::clamp(y_, -1.0, 1.0);
    StepResult r;
    r.obs = {x_, y_};
    const double dx = x_ - goal_x_, dy = y_ - goal_y_;
    if (std::sqrt(dx * dx + dy * dy) < cfg_.goal_radius) {
      r.reward = 1.0;
      done_ = true;
      ++info_.goals_reached;
    }
    r.done = done_;
    return r;
  }

  int obs_len() const override { return 2; }
  const EpisodeInfo& info() const override { return info_; }
  const TaskSpec& task() const override { return spec_; }

 private:
  TaskSpec spec_;
  PointmassConfig cfg_;
  double goal_x_ = 1.0, goal_y_ = 1.0;
  double x_ = 0.0, y_ = 0.0;
  EpisodeInfo info_;
  bool done_ = true;
};

}  // namespace

std::unique_ptr<Env> make_pointmass_env(const TaskSpec& spec, const PointmassConfig& cfg) {
  return std::make_unique<PointmassEnv>(spec, cfg);
}

}  // namespace metaexp::env
