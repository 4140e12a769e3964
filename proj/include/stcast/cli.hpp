#pragma once

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stcast/baselines.hpp"
#include "stcast/checkpoint.hpp"
#include "stcast/config.hpp"
#include "stcast/error.hpp"
#include "stcast/eval.hpp"
#include "stcast/grid.hpp"
#include "stcast/heatmap.hpp"
#include "stcast/ingest.hpp"
#include "stcast/pipeline.hpp"
#include "stcast/signal.hpp"
#include "stcast/ternary.hpp"
#include "stcast/train.hpp"

namespace stcast::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// ---------------------------------------------------------------------------
// Content hashes and the run manifest

// Hash git assigns to a blob with these contents.
inline std::string git_blob_sha1(std::string_view bytes) {
  std::string blob = "blob " + std::to_string(bytes.size()) + '\0';
  blob.append(bytes);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    const unsigned char b = md[i];
    out += hex[b >> 4];
    out += hex[b & 0xF];
  }
  return out;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_text(const fs::path& p, std::string_view text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot write " + p.string());
  f << text;
}

class Manifest {
 public:
  // A file, or every regular file below a directory (sorted, names relative
  // to it). Paths are recorded relative to the input so that runs in
  // different locations produce identical manifests.
  void add_input(const std::string& role, const fs::path& path) {
    if (fs::is_directory(path)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(path))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files)
        lines_.push_back("input " + role + " " + fs::relative(f, path).generic_string() + " " +
                         git_blob_sha1(read_text(f)));
    } else {
      lines_.push_back("input " + role + " " + path.filename().generic_string() + " " +
                       git_blob_sha1(read_text(path)));
    }
  }

  void write(const fs::path& out, const std::string& command, const RunConfig& cfg) const {
    std::ostringstream os;
    os << "command " << command << '\n';
    os << "seed " << (cfg.seed ? std::to_string(*cfg.seed) : std::string("unset")) << '\n';
    std::istringstream conf(describe(cfg));
    for (std::string line; std::getline(conf, line);) os << "config " << line << '\n';
    for (const auto& l : lines_) os << l << '\n';
    write_text(out / "manifest.txt", os.str());
  }

 private:
  std::vector<std::string> lines_;
};

// ---------------------------------------------------------------------------
// Persisted artifacts

inline void write_features_file(const fs::path& p, const ingest::FeatureTable& t) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot write " + p.string());
  ingest::write_features(f, t);
}

inline ingest::FeatureTable read_features_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  return ingest::read_features(f);
}

inline std::size_t read_train_hours(const fs::path& dir) {
  const auto text = read_text(dir / "split.txt");
  const std::string key = "train_hours=";
  const auto pos = text.find(key);
  if (pos == std::string::npos) throw FormatError("split.txt: missing train_hours");
  const auto v = parse_double(std::string_view(text).substr(pos + key.size(), text.find('\n', pos) - pos - key.size()));
  if (!v || *v < 1 || *v != std::floor(*v)) throw FormatError("split.txt: bad train_hours");
  return static_cast<std::size_t>(*v);
}

// The preprocess output directory: raw/, cumulative/ and scaled/ cubes,
// features.csv and split.txt.
inline pipeline::Prepared load_prepared(const fs::path& dir) {
  pipeline::Prepared p;
  p.raw = grid::import_cube(dir / "raw");
  p.cumulative = grid::import_cube(dir / "cumulative");
  p.scaled = grid::import_cube(dir / "scaled");
  p.features = read_features_file(dir / "features.csv");
  p.train_hours = read_train_hours(dir);
  if (p.raw.state != grid::CubeState::raw || p.cumulative.state != grid::CubeState::cumulative ||
      p.scaled.state != grid::CubeState::scaled || !p.scaled.scale_meta)
    throw FormatError("prepared data in " + dir.string() + " has unexpected cube states");
  if (!p.raw.same_shape(p.cumulative) || p.scaled.hours != p.raw.hours ||
      p.scaled.rows != 2 * p.raw.rows - 1 || p.scaled.cols != 2 * p.raw.cols - 1)
    throw FormatError("prepared data in " + dir.string() + " has inconsistent shapes");
  if (p.train_hours > p.raw.hours) throw FormatError("split.txt: training window exceeds the data");
  return p;
}

struct LoadedModel {
  nn::Model model;
  std::string method;
};

inline LoadedModel load_any_checkpoint(const fs::path& path) {
  const auto bytes = nn::ckpt::read_file(path);
  if (bytes.size() >= 4 && bytes[0] == 'S' && bytes[1] == 'T' && bytes[2] == 'R' && bytes[3] == 'T')
    return {ternary::parse_ternary_checkpoint(bytes).model, "ST-ResNet-ternary"};
  return {nn::parse_checkpoint(bytes).model, "ST-ResNet"};
}

inline void export_forecast(const fs::path& dir, const std::string& method, const grid::CrimeCube& cumulative,
                            const grid::CrimeCube& raw) {
  fs::create_directories(dir);
  write_text(dir / "method.txt", method + "\n");
  grid::export_cube(cumulative, dir / "cumulative");
  grid::export_cube(raw, dir / "raw");
}

inline std::vector<eval::ForecastRun> import_forecast(const fs::path& dir, const pipeline::Prepared& p) {
  auto method = read_text(dir / "method.txt");
  while (!method.empty() && (method.back() == '\n' || method.back() == '\r')) method.pop_back();
  std::vector<eval::ForecastRun> runs;
  for (auto domain : {eval::Domain::cumulative, eval::Domain::raw}) {
    eval::ForecastRun r;
    r.method = method;
    r.domain = domain;
    r.predictions = grid::import_cube(dir / std::string(eval::to_string(domain)));
    const auto first = r.predictions.start_hour - p.raw.start_hour;
    if (first < 0 || static_cast<std::size_t>(first) + r.predictions.hours > p.raw.hours)
      throw DataError("forecast in " + dir.string() + " lies outside the prepared data");
    const auto& src = domain == eval::Domain::raw ? p.raw : p.cumulative;
    r.truth = src.slice(static_cast<std::size_t>(first), r.predictions.hours);
    r.truth.state = r.predictions.state;
    runs.push_back(std::move(r));
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Subcommands

inline std::size_t env_threads() {
  if (const char* v = std::getenv("STCAST_THREADS")) {
    const auto d = parse_double(v);
    if (d && *d >= 1) return static_cast<std::size_t>(*d);
  }
  return 1;
}

inline std::uint64_t require_seed(const RunConfig& c, std::string_view cmd) {
  if (!c.seed) throw ConfigError(std::string(cmd) + ": a seed is required (--seed)");
  return *c.seed;
}

inline const std::string& require(const std::string& v, std::string_view key, std::string_view cmd) {
  if (v.empty()) throw ConfigError(std::string(cmd) + ": --" + std::string(key) + " is required");
  return v;
}

inline std::set<std::int64_t> synth_holidays(std::int64_t first_day, std::size_t days) {
  std::set<std::int64_t> out;
  for (std::size_t i = 0; i < days; ++i) {
    const auto d = civil_from_days(first_day + static_cast<std::int64_t>(i));
    if ((d.month == 1 && d.day == 1) || (d.month == 7 && d.day == 4) || (d.month == 11 && d.day == 11) ||
        (d.month == 12 && d.day == 25))
      out.insert(first_day + static_cast<std::int64_t>(i));
  }
  return out;
}

inline int cmd_synth(const RunConfig& c, const fs::path& out) {
  ingest::SynthConfig sc;
  sc.rows = c.grid.rows;
  sc.cols = c.grid.cols;
  sc.days = c.days;
  sc.start_hour = c.start_hour();
  sc.base_rates = ingest::diurnal_rates(sc.rows, sc.cols, c.mean_rate, c.amplitude, c.peak_hour);
  sc.excitation = c.excitation;
  sc.seed = require_seed(c, "synth");
  sc.bounds = c.grid;
  const auto events = ingest::synth_events(sc);
  {
    std::ofstream f(out / "events.csv", std::ios::binary);
    ingest::write_events(f, events);
  }
  {
    std::ofstream f(out / "weather.csv", std::ios::binary);
    ingest::write_weather(f, ingest::synth_weather(sc.start_hour, c.days * kHoursPerDay, sc.seed));
  }
  std::string hol;
  for (auto d : synth_holidays(sc.start_hour / kHoursPerDay, c.days)) hol += format_iso_date(d) + "\n";
  write_text(out / "holidays.txt", hol);
  Manifest().write(out, "synth", c);
  std::cout << "synth: " << events.size() << " events over " << c.days << " days\n";
  return kOk;
}

inline int cmd_ingest(const RunConfig& c, const fs::path& out) {
  Manifest man;
  const auto& ev_path = require(c.events, "events", "ingest");
  const auto& w_path = require(c.weather, "weather", "ingest");
  man.add_input("events", ev_path);
  man.add_input("weather", w_path);
  const auto parsed = ingest::parse_events(ev_path);
  const auto weather = ingest::parse_weather(w_path);
  std::set<std::int64_t> holidays;
  if (!c.holidays.empty()) {
    man.add_input("holidays", c.holidays);
    holidays = ingest::parse_holidays(c.holidays);
  }
  const ingest::HourRange range{c.start_hour(), c.start_hour() + static_cast<EpochHour>(c.days * kHoursPerDay)};
  const auto binned = grid::bin_events(parsed.records, c.grid, range);
  const auto features = ingest::build_feature_table(weather, holidays, range);
  grid::export_cube(binned.cube, out / "cube");
  write_features_file(out / "features.csv", features);
  {
    std::ostringstream os;
    os << "row,message\n";
    for (const auto& r : parsed.rejected) os << r.row << ',' << r.message << '\n';
    write_text(out / "rejected.csv", os.str());
  }
  std::ostringstream summary;
  summary << "records=" << parsed.records.size() << "\nrejected=" << parsed.rejected.size()
          << "\noutside_grid=" << binned.outside_grid << "\noutside_range=" << binned.outside_range << '\n';
  write_text(out / "ingest.txt", summary.str());
  man.write(out, "ingest", c);
  std::cout << summary.str();
  return kOk;
}

inline int cmd_preprocess(const RunConfig& c, const fs::path& out) {
  const fs::path in = require(c.input, "input", "preprocess");
  Manifest man;
  man.add_input("ingest", in);
  auto raw = grid::import_cube(in / "cube");
  auto features = read_features_file(in / "features.csv");
  if (c.train_days == 0) throw ConfigError("preprocess: train_days must be >= 1");
  const std::size_t train_hours = c.train_days * kHoursPerDay;
  if (train_hours >= raw.hours)
    throw DataError("preprocess: training window of " + std::to_string(c.train_days) +
                    " days leaves no held-out hours");
  const auto p = pipeline::prepare(std::move(raw), std::move(features), train_hours);
  grid::export_cube(p.raw, out / "raw");
  grid::export_cube(p.cumulative, out / "cumulative");
  grid::export_cube(p.scaled, out / "scaled");
  write_features_file(out / "features.csv", p.features);
  write_text(out / "split.txt", "train_hours=" + std::to_string(p.train_hours) + "\n");
  man.write(out, "preprocess", c);
  return kOk;
}

inline nn::ModelConfig model_for(const RunConfig& c, const pipeline::Prepared& p) {
  auto mc = pipeline::fit_config(c.model, p);
  mc.validate();
  return mc;
}

inline int cmd_train(const RunConfig& c, const fs::path& out) {
  const fs::path in = require(c.input, "input", "train");
  Manifest man;
  man.add_input("prepared", in);
  const auto p = load_prepared(in);
  auto tc = c.train;
  tc.seed = require_seed(c, "train");
  const auto mc = model_for(c, p);
  auto model = nn::build_model(mc, tc.seed);
  const auto ds = pipeline::training_set(mc, p);
  auto res = nn::train(model, ds, tc);
  nn::Extras extra{{"seed", std::to_string(tc.seed)},
                   {"best_epoch", std::to_string(res.best_epoch)},
                   {"train_hours", std::to_string(p.train_hours)}};
  nn::save_checkpoint(model, out / "model.ckpt", &res.adam, extra);
  std::ostringstream log;
  log << "phase,epoch,loss,validation_mse\n";
  for (std::size_t e = 0; e < res.train_loss.size(); ++e)
    log << "main," << e + 1 << ',' << format_double(res.train_loss[e]) << ','
        << format_double(res.validation_mse[e]) << '\n';
  for (std::size_t e = 0; e < res.finetune_loss.size(); ++e)
    log << "finetune," << e + 1 << ',' << format_double(res.finetune_loss[e]) << ",\n";
  write_text(out / "train_log.csv", log.str());
  man.write(out, "train", c);
  std::cout << "train: best validation epoch " << res.best_epoch << '\n';
  return kOk;
}

inline int cmd_ternarize(const RunConfig& c, const fs::path& out) {
  const fs::path in = require(c.input, "input", "ternarize");
  Manifest man;
  man.add_input("prepared", in);
  const auto p = load_prepared(in);
  auto tc = c.train;
  tc.seed = require_seed(c, "ternarize");
  const auto mc = model_for(c, p);
  nn::Model model;
  if (!c.checkpoint.empty()) {
    man.add_input("checkpoint", c.checkpoint);
    model = nn::load_checkpoint(c.checkpoint).model;
    if (model.config != mc) throw DataError("ternarize: checkpoint model does not match the configuration");
  } else {
    model = nn::build_model(mc, tc.seed);
  }
  const auto ds = pipeline::training_set(mc, p);
  auto state = ternary::init_shadow(model);
  nn::Adam adam(model);
  std::vector<std::size_t> ids(ds.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::ostringstream log;
  log << "epoch,loss\n";
  for (std::size_t e = 0; e < c.epochs_ternary; ++e)
    log << e + 1 << ',' << format_double(ternary::train_ternary_epoch(state, model, adam, ds, ids, tc, e)) << '\n';
  write_text(out / "ternary_log.csv", log.str());
  nn::Extras extra{{"seed", std::to_string(tc.seed)}, {"epochs", std::to_string(c.epochs_ternary)}};
  const auto bytes = ternary::serialize_ternary_checkpoint(model, state, extra);
  nn::ckpt::write_file(out / "model.ckpt", bytes);
  const auto tsizes = ternary::payload_sizes(bytes);
  std::ostringstream sizes;
  sizes << "tensor,n,float_bytes,ternary_bytes\n";
  for (auto idx : state.params) {
    const auto& prm = model.params[idx];
    sizes << prm.name << ',' << prm.value.size() << ',' << 4 * prm.value.size() << ',' << tsizes.at(prm.name)
          << '\n';
  }
  write_text(out / "payload.csv", sizes.str());
  man.write(out, "ternarize", c);
  return kOk;
}

inline int cmd_predict(const RunConfig& c, const fs::path& out) {
  const fs::path in = require(c.input, "input", "predict");
  const fs::path ck = require(c.checkpoint, "checkpoint", "predict");
  Manifest man;
  man.add_input("prepared", in);
  man.add_input("checkpoint", ck);
  const auto p = load_prepared(in);
  const auto loaded = load_any_checkpoint(ck);
  const auto f = pipeline::forecast(loaded.model, p, p.train_hours, p.raw.hours);
  export_forecast(out, loaded.method, f.cumulative, f.raw);
  fs::create_directories(out / "heatmaps");
  for (std::size_t t = 0; t < f.raw.hours; ++t) {
    char name[40];
    std::snprintf(name, sizeof name, "hour_%06zu.pgm", t);
    emit_heatmap(f.raw.frame(t), f.raw.rows, f.raw.cols, out / "heatmaps" / name);
  }
  man.write(out, "predict", c);
  return kOk;
}

inline int cmd_baselines(const RunConfig& c, const fs::path& out) {
  const fs::path in = require(c.input, "input", "baselines");
  Manifest man;
  man.add_input("prepared", in);
  const auto p = load_prepared(in);
  auto settings = c.baselines;
  settings.threads = env_threads();
  const auto res = pipeline::run_baselines(p, p.train_hours, p.raw.hours, settings);
  std::vector<std::string> methods;
  for (const auto& r : res.runs) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    const fs::path dir = out / r.method;
    fs::create_directories(dir);
    write_text(dir / "method.txt", r.method + "\n");
    grid::export_cube(r.predictions, dir / std::string(eval::to_string(r.domain)));
  }
  std::string list;
  for (const auto& m : methods) list += m + "\n";
  write_text(out / "methods.txt", list);
  write_text(out / "baselines.txt", "knn_k_cumulative=" + std::to_string(res.knn_k_cumulative) +
                                        "\nknn_k_raw=" + std::to_string(res.knn_k_raw) +
                                        "\narima_failures=" + std::to_string(res.arima_failures) + "\n");
  man.write(out, "baselines", c);
  return kOk;
}

inline int cmd_evaluate(const RunConfig& c, const fs::path& out) {
  const fs::path in = require(c.input, "input", "evaluate");
  if (c.forecast.empty() && c.baselines_dir.empty())
    throw ConfigError("evaluate: --forecast and/or --baselines is required");
  Manifest man;
  man.add_input("prepared", in);
  const auto p = load_prepared(in);
  std::vector<eval::ForecastRun> runs;
  if (!c.forecast.empty()) {
    man.add_input("forecast", c.forecast);
    for (auto& r : import_forecast(c.forecast, p)) runs.push_back(std::move(r));
  }
  if (!c.baselines_dir.empty()) {
    const fs::path bdir = c.baselines_dir;
    man.add_input("baselines", bdir);
    std::istringstream list(read_text(bdir / "methods.txt"));
    for (std::string m; std::getline(list, m);)
      if (!m.empty())
        for (auto& r : import_forecast(bdir / m, p)) runs.push_back(std::move(r));
  }
  const auto rows = eval::compare_report(runs, c.hit_threshold);
  std::ostringstream csv, txt;
  eval::write_report_csv(csv, rows);
  eval::write_report_text(txt, rows);
  write_text(out / "report.csv", csv.str());
  write_text(out / "report.txt", txt.str());
  man.write(out, "evaluate", c);
  std::cout << txt.str();
  return kOk;
}

inline int cmd_gradcheck(const RunConfig& c, const fs::path& out) {
  const std::uint64_t seed = c.seed.value_or(0);
  auto mc = c.model;
  mc.validate();
  auto model = nn::build_model(mc, seed);
  // Random history long enough for the largest lag, two samples.
  const std::size_t hours = mc.max_lag() + 2;
  grid::CrimeCube cube(0, hours, mc.height, mc.width, grid::CubeState::scaled);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : cube.values) v = u(rng);
  ingest::FeatureTable ft;
  ft.values.resize(hours * ingest::kFeatureWidth);
  for (auto& v : ft.values) v = u(rng);
  const auto ds = nn::make_dataset(mc, cube, ft, 0, hours);
  std::vector<std::size_t> ids(ds.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const auto batch = nn::make_batch(mc, ds, ids);
  const auto rep = nn::grad_check(model, batch, 1e-5, c.train.l2);
  std::ostringstream os;
  os << "coordinates=" << rep.coordinates << "\nreduced_steps=" << rep.reduced_steps
     << "\nmax_relative_error=" << format_double(rep.max_relative_error)
     << "\nworst=" << rep.worst_parameter << "\ntolerance=" << format_double(c.grad_tolerance) << '\n';
  write_text(out / "gradcheck.txt", os.str());
  Manifest().write(out, "gradcheck", c);
  std::cout << os.str();
  if (!(rep.max_relative_error < c.grad_tolerance))
    throw NumericError("gradient check failed: relative error " + format_double(rep.max_relative_error) + " at " +
                       rep.worst_parameter);
  return kOk;
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"synth", "ingest", "preprocess", "train", "predict",
                                                 "evaluate", "ternarize", "baselines", "gradcheck"};
  return names;
}

inline int dispatch(const std::string& cmd, const RunConfig& c) {
  if (c.out.empty()) throw ConfigError(cmd + ": --out is required");
  const fs::path out = c.out;
  fs::create_directories(out);
  if (cmd == "synth") return cmd_synth(c, out);
  if (cmd == "ingest") return cmd_ingest(c, out);
  if (cmd == "preprocess") return cmd_preprocess(c, out);
  if (cmd == "train") return cmd_train(c, out);
  if (cmd == "predict") return cmd_predict(c, out);
  if (cmd == "evaluate") return cmd_evaluate(c, out);
  if (cmd == "ternarize") return cmd_ternarize(c, out);
  if (cmd == "baselines") return cmd_baselines(c, out);
  return cmd_gradcheck(c, out);
}

// Entry point shared by the executable and the tests. Arguments exclude the
// program name.
inline int run(const std::vector<std::string>& args, std::ostream& err = std::cerr) {
  CLI::App app{"Spatiotemporal crime forecasting pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::map<std::string, std::string> overrides;
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "flat key = value configuration file");
    for (const auto& key : config_keys())
      sub->add_option_function<std::string>(
          "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; }, "config override");
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    std::vector<std::pair<std::string, std::string>> assignments;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw ConfigError("cannot open config file " + config_path);
      assignments = parse_config(f);
    }
    for (const auto& kv : overrides) assignments.push_back(kv);
    const RunConfig c = build_config(assignments);
    return dispatch(cmd, c);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const nlohmann::json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
}

}  // namespace stcast::cli
