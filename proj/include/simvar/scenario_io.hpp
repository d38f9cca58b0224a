#pragma once

#include <iosfwd>
#include <string>

#include "simvar/minisim.hpp"

namespace simvar::minisim {

// Scenario file: versioned nested key-value text (#simvar-scenario v1).
// See scenario_io.cpp for the grammar.
ScenarioSpec parse_scenario(std::istream& in);
ScenarioSpec parse_scenario_string(const std::string& text);
ScenarioSpec parse_scenario_file(const std::string& path);

void write_scenario(const ScenarioSpec& spec, std::ostream& out);
std::string write_scenario_string(const ScenarioSpec& spec);
void write_scenario_file(const ScenarioSpec& spec, const std::string& path);

}  // namespace simvar::minisim
