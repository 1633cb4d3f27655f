#include "milcci/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "milcci/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace milcci {

namespace {

void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw_schema(path + ": " + e.what());
  }
}

void require_version(const json& j, const std::string& path) {
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    throw_schema(path + ": missing integer format_version");
  const int v = j["format_version"].get<int>();
  if (v != kFormatVersion)
    throw_schema(path + ": unsupported format_version " + std::to_string(v) + " (expected " +
                 std::to_string(kFormatVersion) + ")");
}

// Parses one CSV of doubles. Empty cells are legal only when mask is given;
// they read as 0 with the mask cleared.
Matrix parse_csv(const std::string& path, const std::string& text, Mask* mask) {
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<std::uint8_t>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    if (line.empty() && pos >= text.size()) break;  // trailing newline

    rows.emplace_back();
    seen.emplace_back();
    std::size_t cell_start = 0;
    while (true) {
      std::size_t comma = line.find(',', cell_start);
      const std::string_view cell = line.substr(
          cell_start, comma == std::string_view::npos ? line.size() - cell_start : comma - cell_start);
      if (cell.empty()) {
        if (!mask)
          throw_schema(path + ":" + std::to_string(line_no) + ": empty cell in a dense matrix");
        rows.back().push_back(0.0);
        seen.back().push_back(0);
      } else {
        const std::string token(cell);
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size() || (errno == ERANGE && !std::isfinite(v)))
          throw_schema(path + ":" + std::to_string(line_no) + ": expected a number, got '" +
                       token + "'");
        rows.back().push_back(v);
        seen.back().push_back(1);
      }
      if (comma == std::string_view::npos) break;
      cell_start = comma + 1;
    }
    if (rows.back().size() != rows.front().size())
      throw_schema(path + ":" + std::to_string(line_no) + ": ragged row (" +
                   std::to_string(rows.back().size()) + " cells, expected " +
                   std::to_string(rows.front().size()) + ")");
  }
  if (rows.empty()) throw_schema(path + ": empty matrix file");

  Matrix m(rows.size(), rows.front().size());
  bool any_missing = false;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(i, j) = rows[i][j];
      if (!seen[i][j]) any_missing = true;
    }
  if (mask && any_missing) {
    *mask = Mask(m.rows(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j) (*mask)(i, j) = seen[i][j];
  }
  return m;
}

std::string matrix_to_csv(const Matrix& m, const Mask* mask) {
  std::string out;
  out.reserve(m.size() * 20);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ',';
      if (mask && !mask->empty() && !(*mask)(i, j)) continue;  // empty cell
      append_double(out, m(i, j));
    }
    out += '\n';
  }
  return out;
}

CategoryKind parse_kind(const std::string& s, const std::string& context) {
  if (s == "categorical") return CategoryKind::categorical;
  if (s == "ordinal") return CategoryKind::ordinal;
  throw_schema(context + ": unknown category kind '" + s + "'");
}

double clamped_tanh(double v) {
  double t = std::tanh(v);
  if (t >= 1.0) t = std::nextafter(1.0, 0.0);
  if (t <= -1.0) t = std::nextafter(-1.0, 0.0);
  return t;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_io(dir + ": cannot create directory: " + ec.message());
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io(path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw_io(path + ": read failed");
  return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw_io(tmp + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw_io(tmp + ": write failed");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw_io(path + ": rename failed: " + std::strerror(errno));
  }
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  write_text_atomic(path, matrix_to_csv(m, nullptr));
}

Matrix read_matrix_csv(const std::string& path) {
  return parse_csv(path, read_text_file(path), nullptr);
}

std::string sanitize_token(const std::string& token) {
  std::string out;
  out.reserve(token.size());
  for (char c : token) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "_" : out;
}

TrialSet load_dataset(const std::string& dir) {
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  if (!fs::exists(manifest_path)) throw_schema(manifest_path + ": missing manifest");
  const json j = parse_json_file(manifest_path);
  require_version(j, manifest_path);

  TrialSet data;
  try {
    data.n_channels = j.at("n_channels").get<std::size_t>();
    if (j.contains("channel_names"))
      data.channel_names = j["channel_names"].get<std::vector<std::string>>();
    const std::string pre = j.value("preprocess", std::string("none"));
    if (pre == "none")
      data.preprocess = Preprocess::none;
    else if (pre == "tanh")
      data.preprocess = Preprocess::tanh;
    else
      throw_schema(manifest_path + ": unknown preprocess '" + pre + "'");

    for (const json& jc : j.at("categories")) {
      CategorySpec c;
      c.name = jc.at("name").get<std::string>();
      c.kind = parse_kind(jc.at("kind").get<std::string>(), manifest_path);
      c.values = jc.at("values").get<std::vector<std::string>>();
      c.n_components = jc.at("n_components").get<std::size_t>();
      if (jc.contains("bandwidth")) c.bandwidth = jc["bandwidth"].get<double>();
      if (jc.contains("free_variants"))
        c.free_variants = jc["free_variants"].get<std::vector<std::size_t>>();
      data.categories.push_back(std::move(c));
    }

    for (const json& jt : j.at("trials")) {
      Trial tr;
      tr.id = jt.at("id").get<std::string>();
      const std::string file = jt.at("file").get<std::string>();
      const std::string path = (fs::path(dir) / file).string();
      if (!fs::exists(path)) throw_schema(path + ": missing trial file (trial '" + tr.id + "')");
      tr.y = parse_csv(path, read_text_file(path), &tr.mask);
      const auto tokens = jt.at("label").get<std::vector<std::string>>();
      if (tokens.size() != data.categories.size())
        throw_schema(manifest_path + ": trial '" + tr.id + "' has " +
                     std::to_string(tokens.size()) + " label entries, expected " +
                     std::to_string(data.categories.size()));
      for (std::size_t k = 0; k < tokens.size(); ++k)
        tr.label.push_back(value_index(data.categories[k], tokens[k]));
      data.trials.push_back(std::move(tr));
    }
  } catch (const json::exception& e) {
    throw_schema(manifest_path + ": " + e.what());
  }

  if (data.preprocess == Preprocess::tanh)
    for (Trial& tr : data.trials)
      for (std::size_t i = 0; i < tr.y.rows(); ++i)
        for (std::size_t t = 0; t < tr.y.cols(); ++t) {
          if (!tr.mask.empty() && !tr.mask(i, t)) continue;
          tr.y(i, t) = clamped_tanh(tr.y(i, t));
        }

  data.validate();
  return data;
}

void save_dataset(const std::string& dir, const TrialSet& data) {
  ensure_dir(dir);
  ensure_dir((fs::path(dir) / "trials").string());

  json j;
  j["format_version"] = kFormatVersion;
  j["n_channels"] = data.n_channels;
  if (!data.channel_names.empty()) j["channel_names"] = data.channel_names;
  j["preprocess"] = "none";
  j["categories"] = json::array();
  for (const CategorySpec& c : data.categories) {
    json jc;
    jc["name"] = c.name;
    jc["kind"] = c.kind == CategoryKind::ordinal ? "ordinal" : "categorical";
    jc["values"] = c.values;
    jc["n_components"] = c.n_components;
    if (c.kind == CategoryKind::ordinal) jc["bandwidth"] = c.bandwidth;
    if (!c.free_variants.empty()) jc["free_variants"] = c.free_variants;
    j["categories"].push_back(std::move(jc));
  }
  j["trials"] = json::array();
  for (const Trial& tr : data.trials) {
    const std::string file = "trials/" + sanitize_token(tr.id) + ".csv";
    json jt;
    jt["id"] = tr.id;
    jt["file"] = file;
    json lab = json::array();
    for (std::size_t k = 0; k < tr.label.size(); ++k)
      lab.push_back(data.categories[k].values[tr.label[k]]);
    jt["label"] = std::move(lab);
    j["trials"].push_back(std::move(jt));
    write_text_atomic((fs::path(dir) / file).string(), matrix_to_csv(tr.y, &tr.mask));
  }
  write_text_atomic((fs::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

void save_model(const std::string& dir, const ModelState& state, const TrialSet& data) {
  ensure_dir(dir);

  json j;
  j["format_version"] = kFormatVersion;
  j["converged"] = state.converged;
  j["noise_variance"] = state.noise_variance;
  j["has_transitions"] = !state.transitions.empty();
  j["categories"] = json::array();
  for (std::size_t k = 0; k < data.categories.size(); ++k) {
    json jc;
    jc["name"] = data.categories[k].name;
    jc["values"] = data.categories[k].values;
    jc["n_components"] = data.categories[k].n_components;
    j["categories"].push_back(std::move(jc));
  }
  j["trial_ids"] = json::array();
  for (const Trial& tr : data.trials) j["trial_ids"].push_back(tr.id);

  for (std::size_t k = 0; k < state.components.size(); ++k) {
    const CategorySpec& spec = data.categories[k];
    for (std::size_t vi = 0; vi < state.components[k].n_variants(); ++vi) {
      const std::string name =
          "A_" + sanitize_token(spec.name) + "_" + sanitize_token(spec.values[vi]) + ".csv";
      write_matrix_csv((fs::path(dir) / name).string(), state.components[k].variants[vi]);
    }
  }
  for (std::size_t m = 0; m < data.trials.size(); ++m) {
    const std::string stem = sanitize_token(data.trials[m].id);
    write_matrix_csv((fs::path(dir) / ("phi_" + stem + ".csv")).string(), state.traces.phi[m]);
    if (!state.transitions.empty() && !state.transitions[m].empty())
      write_matrix_csv((fs::path(dir) / ("transition_" + stem + ".csv")).string(),
                       state.transitions[m]);
  }

  std::string obj = "iteration,objective\n";
  for (std::size_t i = 0; i < state.objective_history.size(); ++i) {
    obj += std::to_string(i);
    obj += ',';
    append_double(obj, state.objective_history[i]);
    obj += '\n';
  }
  write_text_atomic((fs::path(dir) / "objective.csv").string(), obj);
  write_text_atomic((fs::path(dir) / "model.json").string(), j.dump(2) + "\n");
}

LoadedModel load_model(const std::string& dir) {
  const std::string index_path = (fs::path(dir) / "model.json").string();
  if (!fs::exists(index_path)) throw_io(index_path + ": missing model index");
  const json j = parse_json_file(index_path);
  require_version(j, index_path);

  LoadedModel out;
  try {
    out.state.converged = j.value("converged", false);
    out.state.noise_variance = j.value("noise_variance", 0.0);
    for (const json& jc : j.at("categories")) {
      CategorySpec c;
      c.name = jc.at("name").get<std::string>();
      c.values = jc.at("values").get<std::vector<std::string>>();
      c.n_components = jc.at("n_components").get<std::size_t>();
      out.categories.push_back(std::move(c));
    }
    out.trial_ids = j.at("trial_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw_schema(index_path + ": " + e.what());
  }

  out.state.groups = GroupIndex::build(out.categories);
  for (std::size_t k = 0; k < out.categories.size(); ++k) {
    ComponentTensor tensor;
    tensor.category = k;
    for (const std::string& value : out.categories[k].values) {
      const std::string name = "A_" + sanitize_token(out.categories[k].name) + "_" +
                               sanitize_token(value) + ".csv";
      const std::string path = (fs::path(dir) / name).string();
      if (!fs::exists(path)) throw_io(path + ": missing component file");
      tensor.variants.push_back(read_matrix_csv(path));
    }
    out.state.components.push_back(std::move(tensor));
  }

  const bool has_transitions = j.value("has_transitions", false);
  for (const std::string& id : out.trial_ids) {
    const std::string stem = sanitize_token(id);
    const std::string phi_path = (fs::path(dir) / ("phi_" + stem + ".csv")).string();
    if (!fs::exists(phi_path)) throw_io(phi_path + ": missing trace file");
    out.state.traces.phi.push_back(read_matrix_csv(phi_path));
    if (has_transitions) {
      const std::string w_path = (fs::path(dir) / ("transition_" + stem + ".csv")).string();
      if (fs::exists(w_path)) out.state.transitions.push_back(read_matrix_csv(w_path));
    }
  }

  const std::string obj_path = (fs::path(dir) / "objective.csv").string();
  if (fs::exists(obj_path)) {
    const std::string text = read_text_file(obj_path);
    std::istringstream lines(text);
    std::string line;
    bool header = true;
    while (std::getline(lines, line)) {
      if (header) {
        header = false;
        continue;
      }
      if (line.empty()) continue;
      const std::size_t comma = line.find(',');
      if (comma == std::string::npos)
        throw_schema(obj_path + ": malformed line '" + line + "'");
      out.state.objective_history.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
    }
  }
  return out;
}

Hyperparams parse_fit_config_text(const std::string& text, const std::string& context) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw_schema(context + ": " + e.what());
  }
  if (!j.is_object()) throw_schema(context + ": config must be a JSON object");

  Hyperparams hyper;
  for (const char* req : {"gamma1", "gamma2", "gamma3", "gamma4", "gamma5"})
    if (!j.contains(req) || !j[req].is_number())
      throw_schema(context + ": required numeric field '" + req + "' is missing");

  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const json& v = it.value();
      if (key == "gamma1") hyper.gamma1 = v.get<double>();
      else if (key == "gamma2") hyper.gamma2 = v.get<double>();
      else if (key == "gamma3") hyper.gamma3 = v.get<double>();
      else if (key == "gamma4") hyper.gamma4 = v.get<double>();
      else if (key == "gamma5") hyper.gamma5 = v.get<double>();
      else if (key == "nonneg_components") hyper.nonneg_components = v.get<bool>();
      else if (key == "nonneg_traces") hyper.nonneg_traces = v.get<bool>();
      else if (key == "max_outer_iters") hyper.max_outer_iters = v.get<std::size_t>();
      else if (key == "tol") hyper.tol = v.get<double>();
      else if (key == "cd_max_sweeps") hyper.cd_max_sweeps = v.get<std::size_t>();
      else if (key == "cd_tol") hyper.cd_tol = v.get<double>();
      else if (key == "lds_enabled") hyper.lds_enabled = v.get<bool>();
      else if (key == "lds_inner_iters") hyper.lds_inner_iters = v.get<std::size_t>();
      else if (key == "seed") hyper.seed = v.get<std::uint64_t>();
      else if (key == "max_grad_iters") hyper.trace_solver.max_grad_iters = v.get<std::size_t>();
      else if (key == "step_size") hyper.trace_solver.step_size = v.get<double>();
      else if (key == "huber_eps") hyper.trace_solver.huber_eps = v.get<double>();
      else throw_schema(context + ": unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw_schema(context + ": " + e.what());
  }
  return hyper;
}

Hyperparams parse_fit_config(const std::string& path) {
  return parse_fit_config_text(read_text_file(path), path);
}

}  // namespace milcci
