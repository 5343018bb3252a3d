#pragma once

#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

namespace vigtext {

// Exit codes: 0 ok, 1 usage, 2 data, 3 provider, 4 numeric.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Aligned Accuracy/Precision/Recall/F1 table for an eval report
// ({"splits": [...]}) or a robustness report (array of rows).
std::string render_table(const nlohmann::json& report);

}  // namespace vigtext
