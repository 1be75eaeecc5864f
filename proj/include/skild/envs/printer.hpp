#pragma once

#include "skild/envs.hpp"

namespace skild {

/// Carry the printer onto the table and switch it on.
class PrinterEnv final : public Environment {
 public:
  enum Factor : std::size_t { Agent = 0, Printer, Table, kFactors };
  enum Action : int { Forward = 0, Left, Right, UsePrinter, Toggle, kActions };
  enum Task : std::size_t { InstallPrinter = 0 };

  PrinterEnv() {
    using grid::position;
    schema_.name = "printer";
    const int w = schema_.width, h = schema_.height;
    auto agent = position(w, h);
    agent.push_back({"dir", 4});
    auto printer = position(w, h);
    printer.push_back({"carried", 2});
    printer.push_back({"on", 2});
    schema_.factors = {{"agent", agent}, {"printer", printer}, {"table", position(w, h)}};
    schema_.actions = {"forward", "left", "right", "pickup_place_printer", "toggle_printer"};
    schema_.tasks = {"install_printer"};
    const std::size_t n = kFactors, act = kFactors;
    auto add = [&](std::size_t f, std::initializer_list<std::size_t> cols, const char* meaning) {
      schema_.inducible.push_back({row_from_columns(f, n, cols), "", meaning});
    };
    add(Agent, {Agent, act}, "agent moving");
    add(Agent, {Agent}, "agent not moving");
    add(Agent, {Agent, Table}, "agent blocked by the table");
    add(Printer, {Printer}, "printer unchanged");
    add(Printer, {Agent, Printer, act}, "agent picking up or carrying the printer");
    add(Printer, {Agent, Printer, Table, act}, "agent placing the printer on the table or switching it");
    add(Table, {Table}, "table unchanged");
    schema_.finalize();
    for (auto& r : schema_.inducible) r.label = schema_.row_label(r.row);
  }

  [[nodiscard]] const EnvSchema& schema() const override { return schema_; }

  [[nodiscard]] FactoredState reset() const override {
    return {
        {1, 1, grid::South},  // agent
        {1, 6, 0, 0},         // printer on the floor, off
        {6, 1},               // table
    };
  }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override { return std::make_unique<PrinterEnv>(*this); }

  [[nodiscard]] bool satisfied(std::size_t task, const FactoredState& s) const override {
    if (task != InstallPrinter) throw ConfigError("unknown task index for printer");
    const auto& p = s[Printer];
    return p[2] == 0 && p[3] == 1 && grid::cell_of(p) == grid::cell_of(s[Table]);
  }

 protected:
  void transition(const FactoredState& s, ActionId a, FactoredState& next, DependencyGraph& g) const override {
    using namespace grid;
    const std::size_t act = kFactors;
    const bool moved = move_agent(schema_, s, a, {Table}, next, g);
    const Cell front = front_of(s[Agent]);
    const Cell table = cell_of(s[Table]);
    const auto& p = s[Printer];
    if (p[2] == 1) {
      if (a.value == UsePrinter && front == table) {
        FactorValue placed = set_cell(p, front);
        placed.set(2, 0);
        next[Printer] = placed;
        g.set(Printer, Agent);
        g.set(Printer, Table);
        g.set(Printer, act);
      } else if (moved) {
        follow_agent(Printer, next, next, g, act);
      }
    } else if (front == cell_of(p)) {
      if (a.value == UsePrinter) {
        FactorValue held = set_cell(p, cell_of(s[Agent]));
        held.set(2, 1);
        held.set(3, 0);
        next[Printer] = held;
        g.set(Printer, Agent);
        g.set(Printer, act);
      } else if (a.value == Toggle && cell_of(p) == table) {
        next[Printer].set(3, p[3] == 1 ? 0 : 1);
        g.set(Printer, Agent);
        g.set(Printer, Table);
        g.set(Printer, act);
      }
    }
  }

 private:
  EnvSchema schema_;
};

}  // namespace skild
