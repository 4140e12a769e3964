#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stcast/cli.hpp"

namespace stcast::testing {

namespace fs = std::filesystem;

// Small settings shared by every stage of the end-to-end run.
inline std::vector<std::string> small_run_flags(std::uint64_t seed) {
  return {"--seed", std::to_string(seed), "--rows", "4", "--cols", "4", "--days", "16", "--train_days", "12",
          "--filters", "4", "--residual_units", "1", "--lags_close", "1,2", "--lags_period", "24",
          "--lags_trend", "168", "--epochs_main", "5", "--epochs_finetune", "0", "--batch_size", "16",
          "--mean_rate", "0.8"};
}

inline int run_stage(const std::string& cmd, std::vector<std::string> extra, std::uint64_t seed,
                     std::ostream& err) {
  std::vector<std::string> args{cmd};
  for (auto& f : small_run_flags(seed)) args.push_back(std::move(f));
  for (auto& f : extra) args.push_back(std::move(f));
  return cli::run(args, err);
}

// synth → ingest → preprocess → train → predict → baselines → evaluate under
// `root`. Returns the first non-zero exit code, or 0.
inline int run_small_pipeline(const fs::path& root, std::uint64_t seed, std::ostream& err) {
  const auto p = [&](const char* s) { return (root / s).string(); };
  const std::vector<std::pair<std::string, std::vector<std::string>>> stages = {
      {"synth", {"--out", p("synth")}},
      {"ingest",
       {"--events", p("synth/events.csv"), "--weather", p("synth/weather.csv"), "--holidays",
        p("synth/holidays.txt"), "--out", p("ingest")}},
      {"preprocess", {"--input", p("ingest"), "--out", p("prep")}},
      {"train", {"--input", p("prep"), "--out", p("train")}},
      {"predict", {"--input", p("prep"), "--checkpoint", p("train/model.ckpt"), "--out", p("predict")}},
      {"baselines", {"--input", p("prep"), "--out", p("baselines")}},
      {"evaluate", {"--input", p("prep"), "--forecast", p("predict"), "--baselines", p("baselines"), "--out",
                    p("evaluate")}},
  };
  for (const auto& [cmd, extra] : stages)
    if (const int code = run_stage(cmd, extra, seed, err)) {
      err << "stage " << cmd << " exited with " << code << '\n';
      return code;
    }
  return 0;
}

// Relative path → contents for every regular file below `root`.
inline std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = cli::read_text(e.path());
  return out;
}

// Names of files that differ or exist on one side only.
inline std::vector<std::string> tree_differences(const fs::path& a, const fs::path& b) {
  const auto ta = tree_contents(a), tb = tree_contents(b);
  std::vector<std::string> diff;
  for (const auto& [name, bytes] : ta) {
    const auto it = tb.find(name);
    if (it == tb.end() || it->second != bytes) diff.push_back(name);
  }
  for (const auto& [name, bytes] : tb)
    if (!ta.count(name)) diff.push_back(name);
  return diff;
}

}  // namespace stcast::testing
