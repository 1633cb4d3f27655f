#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "milcci/data.hpp"
#include "milcci/error.hpp"
#include "milcci/eval.hpp"
#include "milcci/io.hpp"
#include "milcci/rng.hpp"

using namespace milcci;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("milcci_io_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

TrialSet tiny_set(Preprocess prep = Preprocess::none) {
  TrialSet data;
  data.n_channels = 2;
  data.channel_names = {"c0", "c1"};
  CategorySpec cat;
  cat.name = "cond";
  cat.kind = CategoryKind::categorical;
  cat.values = {"a", "b"};
  cat.n_components = 1;
  data.categories = {cat};
  data.preprocess = prep;

  Trial t;
  t.id = "t0";
  t.y = Matrix(2, 3);
  double v = 0.25;
  for (std::size_t i = 0; i < t.y.size(); ++i, v += 0.25) t.y.data()[i] = v;
  t.label = {1};
  data.trials = {t};
  return data;
}

ModelState tiny_model(bool with_transitions) {
  ModelState state;
  ComponentTensor tensor;
  tensor.category = 0;
  tensor.variants = {Matrix(2, 1), Matrix(2, 1)};
  tensor.variants[0](0, 0) = 1.0 / 3.0;
  tensor.variants[0](1, 0) = -0.1;
  tensor.variants[1](0, 0) = 6.02e23;
  tensor.variants[1](1, 0) = 1e-300;
  state.components = {tensor};
  CategorySpec cat;
  cat.name = "cond";
  cat.values = {"a", "b"};
  cat.n_components = 1;
  state.groups = GroupIndex::build({cat});
  Matrix phi(1, 3);
  phi(0, 0) = 0.7;
  phi(0, 1) = -1.25;
  phi(0, 2) = 1e-9;
  state.traces.phi = {phi};
  if (with_transitions) {
    Matrix w = Matrix::identity(1);
    w(0, 0) = 0.987654321;
    state.transitions = {w};
  }
  state.objective_history = {10.0, 3.5, 3.49999};
  state.converged = true;
  state.noise_variance = 1.2345e-4;
  return state;
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

int run_cli(const std::string& args) {
  const char* exe = std::getenv("MILCCI_CLI_PATH");
#ifdef MILCCI_CLI_PATH
  if (!exe) exe = MILCCI_CLI_PATH;
#endif
  REQUIRE(exe != nullptr);
  const int rc = std::system((std::string(exe) + " " + args).c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("dataset round trip keeps shapes, labels, and values") {
  TempDir dir("roundtrip");
  TrialSet data = tiny_set();
  save_dataset(dir.str(), data);
  TrialSet back = load_dataset(dir.str());

  CHECK(back.n_channels == 2);
  CHECK(back.channel_names == data.channel_names);
  REQUIRE(back.trials.size() == 1);
  CHECK(back.trials[0].id == "t0");
  CHECK(back.trials[0].n_timepoints() == 3);
  CHECK(back.trials[0].label == Label{1});
  CHECK(back.trials[0].fully_observed());
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(back.trials[0].y.data()[i] == data.trials[0].y.data()[i]);
}

TEST_CASE("empty CSV cell becomes a masked zero") {
  TempDir dir("missing");
  TrialSet data = tiny_set();
  save_dataset(dir.str(), data);
  spit(dir.path / "trials" / "t0.csv", "0.25,,0.75\n1.0,1.25,1.5\n");

  TrialSet back = load_dataset(dir.str());
  REQUIRE(!back.trials[0].fully_observed());
  CHECK(back.trials[0].y(0, 1) == 0.0);
  CHECK(!back.trials[0].mask(0, 1));
  CHECK(back.trials[0].mask(0, 0));
  CHECK(back.trials[0].mask.count() == 5);
}

TEST_CASE("tanh preprocess saturates without reaching 1") {
  TempDir dir("tanh");
  TrialSet data = tiny_set(Preprocess::tanh);
  data.trials[0].y(0, 0) = 1e6;
  data.trials[0].y(0, 1) = -1e6;
  // save_dataset writes raw values; flip the manifest to request tanh on load.
  save_dataset(dir.str(), data);
  std::string manifest = read_text_file((dir.path / "manifest.json").string());
  const auto at = manifest.find("\"none\"");
  REQUIRE(at != std::string::npos);
  manifest.replace(at, 6, "\"tanh\"");
  spit(dir.path / "manifest.json", manifest);

  TrialSet back = load_dataset(dir.str());
  CHECK(back.trials[0].y(0, 0) < 1.0);
  CHECK(back.trials[0].y(0, 0) > 0.9999);
  CHECK(back.trials[0].y(0, 1) > -1.0);
  CHECK(back.trials[0].y(0, 1) < -0.9999);
  CHECK(back.trials[0].y(1, 0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
}

TEST_CASE("model archive round trip is bit exact") {
  for (bool with_w : {false, true}) {
    CAPTURE(with_w);
    TempDir dir(with_w ? "model_w" : "model");
    TrialSet data = tiny_set();
    ModelState state = tiny_model(with_w);
    save_model(dir.str(), state, data);
    LoadedModel back = load_model(dir.str());

    REQUIRE(back.state.components.size() == 1);
    for (std::size_t v = 0; v < 2; ++v)
      CHECK(frobenius_distance(back.state.components[0].variants[v],
                               state.components[0].variants[v]) == 0.0);
    REQUIRE(back.state.traces.phi.size() == 1);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(back.state.traces.phi[0].data()[i] == state.traces.phi[0].data()[i]);
    if (with_w) {
      REQUIRE(back.state.transitions.size() == 1);
      CHECK(back.state.transitions[0](0, 0) == state.transitions[0](0, 0));
    } else {
      CHECK(back.state.transitions.empty());
    }
    CHECK(back.state.objective_history == state.objective_history);
    CHECK(back.state.converged == state.converged);
    CHECK(back.state.noise_variance == state.noise_variance);
    CHECK(back.trial_ids == std::vector<std::string>{"t0"});
    REQUIRE(back.categories.size() == 1);
    CHECK(back.categories[0].name == "cond");
    CHECK(back.state.groups.total == 1);
  }
}

TEST_CASE("format_version 2 is rejected in both manifests") {
  TempDir dir("version");
  TrialSet data = tiny_set();
  save_dataset(dir.str(), data);
  std::string manifest = read_text_file((dir.path / "manifest.json").string());
  const auto at = manifest.find("\"format_version\": 1");
  REQUIRE(at != std::string::npos);
  manifest.replace(at, 19, "\"format_version\": 2");
  spit(dir.path / "manifest.json", manifest);
  try {
    load_dataset(dir.str());
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::schema);
    CHECK(std::string(e.what()).find("format_version") != std::string::npos);
  }

  TempDir mdir("version_model");
  save_model(mdir.str(), tiny_model(false), data);
  std::string index = read_text_file((mdir.path / "model.json").string());
  const auto at2 = index.find("\"format_version\": 1");
  REQUIRE(at2 != std::string::npos);
  index.replace(at2, 19, "\"format_version\": 2");
  spit(mdir.path / "model.json", index);
  try {
    load_model(mdir.str());
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::schema);
  }
}

TEST_CASE("stray temp files from an interrupted save are ignored") {
  TempDir dir("atomic");
  TrialSet data = tiny_set();
  ModelState state = tiny_model(true);
  save_model(dir.str(), state, data);
  // Simulate a writer dying mid-save: a truncated temp next to a good file.
  spit(dir.path / "A_cond_a.csv.tmp", "0.333,");
  spit(dir.path / "model.json.tmp", "{\"form");

  LoadedModel back = load_model(dir.str());
  CHECK(frobenius_distance(back.state.components[0].variants[0],
                           state.components[0].variants[0]) == 0.0);
}

TEST_CASE("fit config parses fully and rejects gaps and strangers") {
  const std::string good = R"({
    "gamma1": 0.1, "gamma2": 0.2, "gamma3": 0.3, "gamma4": 0.4, "gamma5": 0.5,
    "nonneg_components": true, "nonneg_traces": false,
    "max_outer_iters": 12, "tol": 1e-4, "cd_max_sweeps": 33, "cd_tol": 1e-5,
    "lds_enabled": true, "lds_inner_iters": 2, "seed": 99,
    "max_grad_iters": 77, "step_size": 0.01, "huber_eps": 1e-3
  })";
  Hyperparams h = parse_fit_config_text(good, "inline");
  CHECK(h.gamma1 == 0.1);
  CHECK(h.gamma5 == 0.5);
  CHECK(h.nonneg_components);
  CHECK(!h.nonneg_traces);
  CHECK(h.max_outer_iters == 12);
  CHECK(h.tol == 1e-4);
  CHECK(h.cd_max_sweeps == 33);
  CHECK(h.lds_enabled);
  CHECK(h.lds_inner_iters == 2);
  CHECK(h.seed == 99);
  CHECK(h.trace_solver.max_grad_iters == 77);
  CHECK(h.trace_solver.step_size == 0.01);
  CHECK(h.trace_solver.huber_eps == 1e-3);

  try {
    parse_fit_config_text(R"({"gamma2":1,"gamma3":1,"gamma4":1,"gamma5":1})", "x");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::schema);
    CHECK(std::string(e.what()).find("gamma1") != std::string::npos);
  }
  try {
    parse_fit_config_text(
        R"({"gamma1":1,"gamma2":1,"gamma3":1,"gamma4":1,"gamma5":1,"gamma6":1})", "x");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("gamma6") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_fit_config_text("not json", "x"), Error);
}

TEST_CASE("matrix CSVs round trip doubles bitwise") {
  TempDir dir("csv");
  Matrix m(2, 2);
  m(0, 0) = 1.0 / 3.0;
  m(0, 1) = 1e-300;
  m(1, 0) = 6.02e23;
  m(1, 1) = -0.1;
  const std::string path = (dir.path / "m.csv").string();
  write_matrix_csv(path, m);
  Matrix back = read_matrix_csv(path);
  REQUIRE(back.rows() == 2);
  REQUIRE(back.cols() == 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(back.data()[i] == m.data()[i]);

  Rng rng(152);
  Matrix r(5, 7);
  for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = rng.normal() * std::pow(10.0, rng.uniform(-12, 12));
  write_matrix_csv(path, r);
  Matrix rb = read_matrix_csv(path);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(rb.data()[i] == r.data()[i]);
}

TEST_CASE("ragged and non-numeric trial files carry file and line context") {
  TempDir dir("ragged");
  TrialSet data = tiny_set();
  save_dataset(dir.str(), data);
  spit(dir.path / "trials" / "t0.csv", "1,2,3\n4,5\n");
  try {
    load_dataset(dir.str());
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::schema);
    CHECK(std::string(e.what()).find("t0.csv") != std::string::npos);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }

  spit(dir.path / "trials" / "t0.csv", "1,2,3\n4,zebra,6\n");
  try {
    load_dataset(dir.str());
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("zebra") != std::string::npos);
  }
}

TEST_CASE("cli rejects bad configs and parameter bounds") {
  TempDir dir("cli");
  TrialSet data = tiny_set();
  save_dataset((dir.path / "d").string(), data);
  spit(dir.path / "no_gamma1.json", R"({"gamma2":1,"gamma3":1,"gamma4":0,"gamma5":1})");

  CHECK(run_cli("fit --data " + (dir.path / "d").string() + " --out " +
                (dir.path / "m").string() + " --config " +
                (dir.path / "no_gamma1.json").string() + " 2>/dev/null") == 2);
  CHECK(run_cli("validate --model " + (dir.path / "m").string() + " --data " +
                (dir.path / "d").string() + " --n-perm 0 2>/dev/null") == 2);
  CHECK(run_cli("eval --model " + (dir.path / "nope").string() + " --truth " +
                (dir.path / "d").string() + " 2>/dev/null") == 4);
}
