#include "rbmsem/model_io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

namespace rbmsem {

namespace {

struct RawCell {
  int row;
  int col;
  bool is_free;
  double value;
  std::string label;
};

MatrixKind parse_kind(const std::string& text) {
  if (text == "general") return MatrixKind::General;
  if (text == "symmetric") return MatrixKind::Symmetric;
  if (text == "diagonal") return MatrixKind::Diagonal;
  throw std::invalid_argument("unknown matrix kind '" + text + "'");
}

std::string kind_name(MatrixKind kind) {
  switch (kind) {
    case MatrixKind::General: return "general";
    case MatrixKind::Symmetric: return "symmetric";
    case MatrixKind::Diagonal: return "diagonal";
  }
  return "general";
}

std::pair<int, int> shape_of(MatrixId id, int p, int q) {
  switch (id) {
    case MatrixId::Nu: return {p, 1};
    case MatrixId::Lambda: return {p, q};
    case MatrixId::Theta: return {p, p};
    case MatrixId::Alpha: return {q, 1};
    case MatrixId::B: return {q, q};
    case MatrixId::Psi: return {q, q};
  }
  return {0, 0};
}

}  // namespace

ModelSpec model_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("model document must be a JSON object");
  if (doc.contains("preset")) {
    ModelSpec spec = presets::by_name(doc.at("preset").get<std::string>());
    return spec;
  }
  const int p = doc.at("p").get<int>();
  const int q = doc.at("q").get<int>();
  const bool mean_structure = doc.value("mean_structure", true);
  const nlohmann::json mats = doc.value("matrices", nlohmann::json::object());

  std::array<MatrixKind, kMatrixCount> kinds{MatrixKind::General, MatrixKind::General, MatrixKind::Symmetric,
                                             MatrixKind::General, MatrixKind::General, MatrixKind::Symmetric};
  std::array<std::vector<RawCell>, kMatrixCount> raw;
  for (MatrixId id : kAllMatrices) {
    const std::string key{matrix_name(id)};
    if (!mats.contains(key)) continue;
    const nlohmann::json* cells = &mats.at(key);
    if (cells->is_object()) {
      kinds[static_cast<std::size_t>(id)] = parse_kind(cells->value("kind", "general"));
      cells = &cells->at("cells");
    }
    for (const auto& c : *cells) {
      RawCell rc{c.at("row").get<int>() - 1, c.value("col", 1) - 1, false, 0.0, {}};
      const bool has_fixed = c.contains("fixed");
      const bool has_free = c.contains("free");
      if (has_fixed == has_free)
        throw std::invalid_argument(key + " cell must carry exactly one of 'fixed' or 'free'");
      if (has_free) {
        rc.is_free = true;
        rc.label = c.at("free").get<std::string>();
      } else {
        rc.value = c.at("fixed").get<double>();
      }
      raw[static_cast<std::size_t>(id)].push_back(std::move(rc));
    }
  }
  for (MatrixId id : {MatrixId::Theta, MatrixId::Psi})
    if (kinds[static_cast<std::size_t>(id)] == MatrixKind::General)
      throw std::invalid_argument(std::string(matrix_name(id)) + " must be symmetric or diagonal");

  // Label indices follow the canonical traversal order of first appearance.
  std::map<std::string, int> label_index;
  std::vector<std::string> names;
  ModelSpec::Patterns pats;
  for (MatrixId id : kAllMatrices) {
    const auto s = static_cast<std::size_t>(id);
    const auto [r, c] = shape_of(id, p, q);
    MatrixPattern pat(r, c, kinds[s]);
    std::map<std::pair<int, int>, const RawCell*> by_cell;
    for (const RawCell& rc : raw[s]) {
      int i = rc.row;
      int j = rc.col;
      if (i < 0 || j < 0 || i >= r || j >= c)
        throw std::invalid_argument(std::string(matrix_name(id)) + " cell (" + std::to_string(rc.row + 1) + "," +
                                    std::to_string(rc.col + 1) + ") is out of range");
      if (pat.symmetric() && j > i) std::swap(i, j);
      if (!by_cell.emplace(std::pair{i, j}, &rc).second)
        throw std::invalid_argument(std::string(matrix_name(id)) + " lists a cell twice");
    }
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) {
        if (pat.symmetric() && j > i) continue;
        auto it = by_cell.find({i, j});
        if (it == by_cell.end()) continue;
        const RawCell& rc = *it->second;
        if (!rc.is_free) {
          pat.set_fixed(i, j, rc.value);
          continue;
        }
        auto [li, inserted] = label_index.try_emplace(rc.label, static_cast<int>(names.size()));
        if (inserted) names.push_back(rc.label);
        pat.set_free(i, j, li->second);
      }
    }
    pats[s] = std::move(pat);
  }

  ModelSpec spec(p, q, std::move(pats), mean_structure, names, doc.value("name", std::string("custom")));
  if (doc.contains("se_threshold")) spec = spec.with_se_threshold(doc.at("se_threshold").get<double>());
  if (doc.contains("bounds")) {
    Vector lower = spec.lower_bounds();
    Vector upper = spec.upper_bounds();
    for (const auto& [label, pair] : doc.at("bounds").items()) {
      const int a = spec.index_of(label);
      if (a < 0) throw std::invalid_argument("bounds refer to unknown parameter '" + label + "'");
      lower[a] = pair.at(0).get<double>();
      upper[a] = pair.at(1).get<double>();
    }
    spec = spec.with_bounds(lower, upper);
  }
  return spec;
}

nlohmann::json model_to_json(const ModelSpec& spec) {
  nlohmann::json doc;
  doc["name"] = spec.label();
  doc["p"] = spec.p();
  doc["q"] = spec.q();
  doc["mean_structure"] = spec.mean_structure();
  if (std::isfinite(spec.se_threshold())) doc["se_threshold"] = spec.se_threshold();
  const auto& params = spec.parameters();
  nlohmann::json mats = nlohmann::json::object();
  for (MatrixId id : kAllMatrices) {
    const MatrixPattern& pat = spec.pattern(id);
    nlohmann::json cells = nlohmann::json::array();
    for (int i = 0; i < pat.rows(); ++i) {
      for (int j = 0; j < pat.cols(); ++j) {
        if (pat.symmetric() && j > i) continue;
        const CellTag& tag = pat.at(i, j);
        if (!tag.is_free() && tag.value == 0.0) continue;
        nlohmann::json cell{{"row", i + 1}, {"col", j + 1}};
        if (tag.is_free())
          cell["free"] = params[static_cast<std::size_t>(tag.index)].name;
        else
          cell["fixed"] = tag.value;
        cells.push_back(std::move(cell));
      }
    }
    if (id == MatrixId::Theta || id == MatrixId::Psi)
      mats[std::string(matrix_name(id))] = {{"kind", kind_name(pat.kind())}, {"cells", cells}};
    else
      mats[std::string(matrix_name(id))] = cells;
  }
  doc["matrices"] = mats;
  nlohmann::json bounds = nlohmann::json::object();
  for (const auto& fp : params)
    if (std::isfinite(fp.lower) || std::isfinite(fp.upper))
      bounds[fp.name] = {std::isfinite(fp.lower) ? nlohmann::json(fp.lower) : nlohmann::json(-1e300),
                         std::isfinite(fp.upper) ? nlohmann::json(fp.upper) : nlohmann::json(1e300)};
  if (!bounds.empty()) doc["bounds"] = bounds;
  return doc;
}

ModelSpec load_model(std::string_view preset_or_path) {
  if (presets::is_preset(preset_or_path)) return presets::by_name(preset_or_path);
  std::ifstream in{std::string(preset_or_path)};
  if (!in) throw std::runtime_error("cannot open model file '" + std::string(preset_or_path) + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed model file: " + std::string(e.what()));
  }
  try {
    return model_from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed model file: " + std::string(e.what()));
  }
}

}  // namespace rbmsem
