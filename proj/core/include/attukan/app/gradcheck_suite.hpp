#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attukan/numerics/gradcheck.hpp"

namespace attukan::app {

/// One registered finite-difference check on a fixed tiny shape.
struct GradCase {
  std::string name;
  std::string kind;  // "op", "layer", "block", "loss" or "network"
  std::function<GradCheckReport()> run;
};

/// Every primitive, layer, block, loss and the assembled network. With
/// `inject_fault` a fixture whose backward rule is deliberately wrong
/// ("corrupted_square") is appended.
std::vector<GradCase> gradcheck_cases(bool inject_fault = false);

struct GradSuiteRow {
  std::string name;
  std::string kind;
  GradCheckReport report;
  double seconds = 0.0;
};

struct GradSuiteResult {
  std::vector<GradSuiteRow> rows;
  bool passed = true;

  std::vector<std::string> failures() const;
  /// Fixed-width text table, one line per case.
  std::string table() const;
  nlohmann::json to_json() const;
};

GradSuiteResult run_gradcheck_suite(bool inject_fault = false,
                                    const std::function<void(const GradSuiteRow&)>& on_row = {});

}  // namespace attukan::app
