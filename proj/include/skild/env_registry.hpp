#pragma once

#include <memory>
#include <string>
#include <vector>

#include "skild/envs.hpp"
#include "skild/envs/cleaning_car.hpp"
#include "skild/envs/printer.hpp"
#include "skild/envs/thawing.hpp"

namespace skild {

inline std::vector<std::string> env_names() { return {"printer", "thawing", "cleaning_car"}; }

inline std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "printer") return std::make_unique<PrinterEnv>();
  if (name == "thawing") return std::make_unique<ThawingEnv>();
  if (name == "cleaning_car") return std::make_unique<CleaningCarEnv>();
  throw ConfigError("unknown env '" + name + "'");
}

}  // namespace skild
