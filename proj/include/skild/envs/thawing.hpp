#pragma once

#include "skild/envs.hpp"

namespace skild {

/// Take frozen food out of the fridge and thaw it in the running sink.
/// An object thaws after kThawSteps consecutive steps in the running sink.
class ThawingEnv final : public Environment {
 public:
  enum Factor : std::size_t { Agent = 0, Sink, Fridge, Fish, Olive, Date, kFactors };
  enum Action : int { Forward = 0, Left, Right, UseFridge, ToggleSink, UseFish, UseOlive, UseDate, kActions };
  enum Task : std::size_t { ThawFish = 0, ThawOlive, ThawDate };
  static constexpr int kThawSteps = 3;

  ThawingEnv() {
    using grid::position;
    schema_.name = "thawing";
    const int w = schema_.width, h = schema_.height;
    auto agent = position(w, h);
    agent.push_back({"dir", 4});
    auto sink = position(w, h);
    sink.push_back({"on", 2});
    auto fridge = position(w, h);
    fridge.push_back({"open", 2});
    auto food = position(w, h);
    food.push_back({"carried", 2});
    food.push_back({"thawed", 2});
    food.push_back({"counter", kThawSteps});
    schema_.factors = {{"agent", agent}, {"sink", sink}, {"fridge", fridge},
                       {"fish", food},   {"olive", food}, {"date", food}};
    schema_.actions = {"forward",     "left",          "right",          "open_close_fridge",
                       "toggle_sink", "pickup_place_fish", "pickup_place_olive", "pickup_place_date"};
    schema_.tasks = {"thaw_fish", "thaw_olive", "thaw_date"};
    const std::size_t n = kFactors, act = kFactors;
    auto add = [&](std::size_t f, std::initializer_list<std::size_t> cols, std::string meaning) {
      schema_.inducible.push_back({row_from_columns(f, n, cols), "", std::move(meaning)});
    };
    add(Agent, {Agent, act}, "agent moving");
    add(Agent, {Agent}, "agent not moving");
    add(Agent, {Agent, Sink}, "agent blocked by the sink");
    add(Agent, {Agent, Fridge}, "agent blocked by the fridge");
    add(Sink, {Sink}, "sink unchanged");
    add(Sink, {Agent, Sink, act}, "agent turning the sink on or off");
    add(Fridge, {Fridge}, "fridge unchanged");
    add(Fridge, {Agent, Fridge, act}, "agent opening or closing the fridge");
    for (std::size_t o = Fish; o <= Date; ++o) {
      const std::string name = schema_.factors[o].name;
      add(o, {o}, name + " unchanged");
      add(o, {Agent, o, act}, "agent picking up, carrying or placing the " + name);
      add(o, {Agent, Fridge, o, act}, "agent taking the " + name + " out of or into the open fridge");
      add(o, {Sink, o}, "the running sink thawing the " + name);
    }
    schema_.finalize();
    for (auto& r : schema_.inducible) r.label = schema_.row_label(r.row);
  }

  [[nodiscard]] const EnvSchema& schema() const override { return schema_; }

  [[nodiscard]] FactoredState reset() const override {
    return {
        {3, 4, grid::North},  // agent
        {6, 2, 0},            // sink, off
        {1, 2, 0},            // fridge, closed
        {1, 2, 0, 0, 0},      // fish, frozen in the fridge
        {1, 2, 0, 0, 0},      // olive
        {1, 2, 0, 0, 0},      // date
    };
  }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override { return std::make_unique<ThawingEnv>(*this); }

  [[nodiscard]] bool satisfied(std::size_t task, const FactoredState& s) const override {
    if (task > ThawDate) throw ConfigError("unknown task index for thawing");
    return s[Fish + task][3] == 1;
  }

 protected:
  void transition(const FactoredState& s, ActionId a, FactoredState& next, DependencyGraph& g) const override {
    using namespace grid;
    const std::size_t act = kFactors;
    const bool moved = move_agent(schema_, s, a, {Sink, Fridge}, next, g);
    const Cell front = front_of(s[Agent]);
    const bool front_ok = in_grid(front, schema_.width, schema_.height);
    const Cell fridge = cell_of(s[Fridge]);
    const Cell sink = cell_of(s[Sink]);
    const bool fridge_open = s[Fridge][2] == 1;
    const bool sink_on = s[Sink][2] == 1;

    if (a.value == UseFridge && front == fridge) {
      next[Fridge].set(2, fridge_open ? 0 : 1);
      g.set(Fridge, Agent);
      g.set(Fridge, act);
    }
    if (a.value == ToggleSink && front == sink) {
      next[Sink].set(2, sink_on ? 0 : 1);
      g.set(Sink, Agent);
      g.set(Sink, act);
    }

    for (std::size_t o = Fish; o <= Date; ++o) {
      const auto& obj = s[o];
      const bool use = a.value == static_cast<int>(UseFish + (o - Fish));
      auto touch = [&](FactorValue v, Cell at) {
        next[o] = v;
        g.set(o, Agent);
        g.set(o, act);
        if (at == fridge) g.set(o, Fridge);
      };
      if (obj[2] == 1) {
        if (use && front_ok && (front != fridge || fridge_open)) {
          FactorValue placed = set_cell(obj, front);
          placed.set(2, 0);
          placed.set(4, 0);
          touch(placed, front);
        } else if (moved) {
          follow_agent(o, next, next, g, act);
        }
      } else if (use && front == cell_of(obj) && (front != fridge || fridge_open)) {
        FactorValue held = set_cell(obj, cell_of(s[Agent]));
        held.set(2, 1);
        held.set(4, 0);
        touch(held, front);
      } else if (cell_of(obj) == sink && obj[3] == 0) {
        if (sink_on) {
          const int c = obj[4] + 1;
          if (c >= kThawSteps) {
            next[o].set(3, 1);
            next[o].set(4, 0);
          } else {
            next[o].set(4, c);
          }
          g.set(o, Sink);
        } else if (obj[4] > 0) {
          next[o].set(4, 0);
          g.set(o, Sink);
        }
      }
    }
  }

 private:
  EnvSchema schema_;
};

}  // namespace skild
