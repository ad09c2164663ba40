#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "rbmsem/model.hpp"

namespace rbmsem {

/// Parses a model document:
///   {"p": 6, "q": 2, "mean_structure": true, "se_threshold": 5,
///    "matrices": {"lambda": [{"row": 1, "col": 1, "fixed": 1},
///                            {"row": 2, "col": 1, "free": "l21"}], ...},
///    "bounds": {"l21": [-10, 10]}}
/// Rows and columns are 1-based. Unlisted cells are fixed at zero. Theta and
/// psi may be given as {"kind": "diagonal", "cells": [...]}. A label that
/// appears in several cells declares an equality constraint.
ModelSpec model_from_json(const nlohmann::json& doc);
nlohmann::json model_to_json(const ModelSpec& spec);

/// Resolves a preset name or reads a JSON model file.
ModelSpec load_model(std::string_view preset_or_path);

}  // namespace rbmsem
