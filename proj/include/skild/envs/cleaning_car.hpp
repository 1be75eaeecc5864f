#pragma once

#include "skild/envs.hpp"

namespace skild {

/// Soak a rag in the sink, clean the car with it, then clean the rag in a
/// bucket that has soap in it.
class CleaningCarEnv final : public Environment {
 public:
  enum Factor : std::size_t { Agent = 0, Car, Sink, Bucket, Shelf, Rag, Soap, kFactors };
  enum Action : int { Forward = 0, Left, Right, ToggleSink, UseRag, UseSoap, Apply, kActions };
  enum Task : std::size_t { SoakRag = 0, CleanCar, CleanRag };

  CleaningCarEnv() {
    using grid::position;
    schema_.name = "cleaning_car";
    auto with = [](std::vector<ComponentSpec> base, std::vector<ComponentSpec> extra) {
      base.insert(base.end(), extra.begin(), extra.end());
      return base;
    };
    const int w = schema_.width, h = schema_.height;
    schema_.factors = {
        {"agent", with(position(w, h), {{"dir", 4}})},
        {"car", with(position(w, h), {{"clean", 2}})},
        {"sink", with(position(w, h), {{"on", 2}})},
        {"bucket", with(position(w, h), {{"soapy", 2}})},
        {"shelf", position(w, h)},
        {"rag", with(position(w, h), {{"carried", 2}, {"soaked", 2}, {"clean", 2}})},
        {"soap", with(position(w, h), {{"carried", 2}})},
    };
    schema_.actions = {"forward", "left", "right", "toggle_sink", "pickup_place_rag", "pickup_place_soap", "apply"};
    schema_.tasks = {"soak_rag", "clean_car", "clean_rag"};
    const std::size_t n = kFactors, act = kFactors;
    auto add = [&](std::size_t f, std::initializer_list<std::size_t> cols, const char* meaning) {
      const RowKey r = row_from_columns(f, n, cols);
      schema_.inducible.push_back({r, "", meaning});
    };
    add(Agent, {Agent, act}, "agent moving");
    add(Agent, {Agent}, "agent not moving");
    add(Agent, {Agent, Car}, "agent blocked by the car");
    add(Agent, {Agent, Sink}, "agent blocked by the sink");
    add(Agent, {Agent, Bucket}, "agent blocked by the bucket");
    add(Agent, {Agent, Shelf}, "agent blocked by the shelf");
    add(Car, {Car}, "car unchanged");
    add(Car, {Car, Rag}, "the soaked rag cleaning the car");
    add(Sink, {Sink}, "sink unchanged");
    add(Sink, {Agent, Sink, act}, "agent turning the sink on or off");
    add(Bucket, {Bucket}, "bucket unchanged");
    add(Bucket, {Bucket, Soap}, "soap dissolving in the bucket");
    add(Shelf, {Shelf}, "shelf unchanged");
    add(Rag, {Rag}, "rag unchanged");
    add(Rag, {Agent, Rag, act}, "agent picking up, carrying or placing the rag");
    add(Rag, {Agent, Sink, Rag, act}, "agent placing the rag into the running sink");
    add(Rag, {Sink, Rag}, "the running sink soaking the rag");
    add(Rag, {Car, Rag}, "the rag getting dirty on the car");
    add(Rag, {Bucket, Rag}, "the soapy bucket cleaning the rag");
    add(Soap, {Soap}, "soap unchanged");
    add(Soap, {Agent, Soap, act}, "agent picking up, carrying or placing the soap");
    schema_.finalize();
    for (auto& r : schema_.inducible) r.label = schema_.row_label(r.row);
  }

  [[nodiscard]] const EnvSchema& schema() const override { return schema_; }

  [[nodiscard]] FactoredState reset() const override {
    return {
        {3, 4, grid::North},  // agent
        {4, 3, 0},            // car, dirty
        {3, 2, 0},            // sink, off
        {4, 4, 0},            // bucket, no soap
        {2, 3},               // shelf
        {2, 3, 0, 0, 1},      // rag on the shelf, dry and clean
        {2, 3, 0},            // soap on the shelf
    };
  }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override { return std::make_unique<CleaningCarEnv>(*this); }

  [[nodiscard]] bool satisfied(std::size_t task, const FactoredState& s) const override {
    switch (task) {
      case SoakRag: return s[Rag][3] == 1;
      case CleanCar: return s[Car][2] == 1;
      case CleanRag: return s[Rag][4] == 1;
      default: throw ConfigError("unknown task index for cleaning_car");
    }
  }

 protected:
  void transition(const FactoredState& s, ActionId a, FactoredState& next, DependencyGraph& g) const override {
    using namespace grid;
    const std::size_t act = kFactors;
    const bool moved = move_agent(schema_, s, a, {Car, Sink, Bucket, Shelf}, next, g);
    const Cell front = front_of(s[Agent]);
    const bool front_ok = in_grid(front, schema_.width, schema_.height);
    const auto& rag = s[Rag];
    const auto& sink = s[Sink];
    const auto& bucket = s[Bucket];
    const auto& car = s[Car];
    const bool sink_on = sink[2] == 1;

    // Car and rag.
    if (a.value == Apply && rag[2] == 1 && rag[3] == 1 && front == cell_of(car) && car[2] == 0) {
      next[Car].set(2, 1);
      next[Rag].set(4, 0);
      g.set(Car, Rag);
      g.set(Rag, Car);
    } else if (rag[2] == 1) {
      if (a.value == UseRag && front_ok) {
        FactorValue placed = set_cell(rag, front);
        placed.set(2, 0);
        g.set(Rag, Agent);
        g.set(Rag, act);
        if (front == cell_of(sink) && sink_on && rag[3] == 0) {
          placed.set(3, 1);
          g.set(Rag, Sink);
        }
        next[Rag] = placed;
      } else if (moved) {
        follow_agent(Rag, next, next, g, act);
      }
    } else {
      if (a.value == UseRag && front == cell_of(rag)) {
        FactorValue held = set_cell(rag, cell_of(s[Agent]));
        held.set(2, 1);
        next[Rag] = held;
        g.set(Rag, Agent);
        g.set(Rag, act);
      } else if (cell_of(rag) == cell_of(sink) && sink_on && rag[3] == 0) {
        next[Rag].set(3, 1);
        g.set(Rag, Sink);
      } else if (cell_of(rag) == cell_of(bucket) && bucket[2] == 1 && rag[4] == 0) {
        next[Rag].set(4, 1);
        g.set(Rag, Bucket);
      }
    }

    // Soap.
    const auto& soap = s[Soap];
    if (soap[2] == 1) {
      if (a.value == UseSoap && front_ok) {
        FactorValue placed = set_cell(soap, front);
        placed.set(2, 0);
        next[Soap] = placed;
        g.set(Soap, Agent);
        g.set(Soap, act);
      } else if (moved) {
        follow_agent(Soap, next, next, g, act);
      }
    } else if (a.value == UseSoap && front == cell_of(soap)) {
      FactorValue held = set_cell(soap, cell_of(s[Agent]));
      held.set(2, 1);
      next[Soap] = held;
      g.set(Soap, Agent);
      g.set(Soap, act);
    }

    // Bucket.
    if (bucket[2] == 0 && soap[2] == 0 && cell_of(soap) == cell_of(bucket)) {
      next[Bucket].set(2, 1);
      g.set(Bucket, Soap);
    }

    // Sink.
    if (a.value == ToggleSink && front == cell_of(sink)) {
      next[Sink].set(2, sink_on ? 0 : 1);
      g.set(Sink, Agent);
      g.set(Sink, act);
    }
  }

 private:
  EnvSchema schema_;
};

}  // namespace skild
