#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "reskin/adapt.hpp"
#include "reskin/binio.hpp"
#include "reskin/config.hpp"
#include "reskin/datagen.hpp"
#include "reskin/eval.hpp"
#include "reskin/experiments.hpp"
#include "reskin/neural.hpp"
#include "reskin/protocol.hpp"

namespace reskin::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using binio::read_file;
using binio::write_file;
using binio::write_text;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string preset;
  std::string run_dir;
  int jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_preset = true) {
  cmd->add_option("-c,--config", c.config_file, "JSON config file (nested or dotted keys)");
  cmd->add_option("-s,--set", c.sets, "override a key: --set train.epochs=20 (repeatable, wins over --config)");
  if (with_preset) cmd->add_option("-p,--preset", c.preset, "experiment preset, applied before --config and --set");
  cmd->add_option("--run-dir", c.run_dir, "output directory (default: <output root>/<config hash>)");
  cmd->add_option("-j,--jobs", c.jobs, "parallel jobs")->check(CLI::PositiveNumber);
}

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

// defaults -> preset -> config file -> --set flags.
cfg::RunConfig resolve_config(const Common& c) {
  json file = json::object();
  if (!c.config_file.empty()) {
    std::ifstream in(c.config_file);
    if (!in) throw IoError("cannot read config file " + c.config_file);
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(c.config_file + ": " + e.what());
    }
  }
  std::string preset = c.preset;
  if (preset.empty()) {
    for (const auto& s : c.sets)
      if (const auto [k, v] = split_assignment(s); k == "preset") preset = v;
  }
  if (preset.empty()) {
    if (file.contains("preset") && file["preset"].is_string()) preset = file["preset"].get<std::string>();
  }
  cfg::RunConfig config;
  if (!preset.empty()) exp::apply_preset(config, preset);
  config.merge(file);
  for (const auto& s : c.sets) {
    const auto [k, v] = split_assignment(s);
    config.set(k, v);
  }
  if (!c.preset.empty()) config.set_json("preset", c.preset);
  config.validate();
  return config;
}

fs::path run_dir(const Common& c, const cfg::RunConfig& config) {
  fs::path dir;
  if (!c.run_dir.empty()) {
    dir = c.run_dir;
  } else {
    std::string root = config.as<std::string>("output.root");
    if (root.empty()) root = cfg::default_output_root();
    dir = fs::path(root) / config.hash();
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_config(const fs::path& dir, const cfg::RunConfig& config) {
  write_text((dir / "config.json").string(), config.nested().dump(2) + "\n");
}

void note(const std::string& msg) { std::cerr << "reskin: " << msg << "\n"; }

void write_lines(const fs::path& path, const std::vector<data::UnlabeledLine>& lines,
                 const std::string& id, const cfg::RunConfig& config) {
  const auto bytes = data::encode_lines(lines, {{"sensor_id", id}, {"config_hash", config.hash()}});
  write_file(path.string(), bytes);
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  Common common;
  std::optional<int> passes;
  bool csv = false;
};

int cmd_simulate(SimulateArgs& a) {
  if (a.passes) a.common.sets.push_back("data.passes=" + std::to_string(*a.passes));
  const auto config = resolve_config(a.common);
  const auto dir = run_dir(a.common, config);
  write_config(dir, config);
  json files = json::array();
  auto emit = [&](const std::string& id, const data::Dataset& ds,
                  const std::vector<data::UnlabeledLine>& lines) {
    const std::string base = id + ".rskd";
    data::write_dataset((dir / base).string(), ds);
    json entry = {{"sensor_id", id}, {"dataset", base}, {"samples", ds.samples.size()},
                  {"label_dim", ds.meta.label_dim}};
    if (!lines.empty()) {
      const std::string lf = id + ".rskl";
      write_lines(dir / lf, lines, id, config);
      entry["lines"] = lf;
      entry["line_count"] = lines.size();
    }
    if (a.csv) write_text((dir / (id + ".csv")).string(), data::dataset_csv(ds));
    files.push_back(entry);
  };
  if (config.as<bool>("data.fleet")) {
    const auto fleet = exp::simulate_fleet(config, a.common.jobs, note);
    for (const auto& id : fleet.ids()) {
      const auto& s = fleet.sensor(id);
      emit(id, s.dataset, s.adaptation_lines);
      files.back()["board"] = s.board;
    }
  } else {
    auto sensor = exp::make_single_sensor(config);
    const auto ds = exp::simulate_dataset(config, sensor, "sensor");
    data::ProtocolOptions po = config.protocol_options();
    po.seed = derive_seed(po.seed, 0x11e5);
    std::vector<data::UnlabeledLine> lines;
    for (const auto& l : data::line_adaptation_protocol(sensor, config.as<int>("lines.count"),
                                                        config.as<int>("lines.points"), po,
                                                        config.lines()))
      lines.push_back(data::strip_labels(l));
    emit("sensor", ds, lines);
  }
  const json manifest = {{"config_hash", config.hash()}, {"files", files}};
  write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << (dir / "manifest.json").string() << "\n";
  return ok;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::vector<std::string> data;
  bool triplet = false;
  int test_samples = 0;
  std::string output;
};

std::string dataset_id(const data::Dataset& ds, std::size_t k) {
  return ds.meta.sensor_ids.size() == 1 ? ds.meta.sensor_ids.front() : "data" + std::to_string(k);
}

int cmd_train(TrainArgs& a) {
  const auto config = resolve_config(a.common);
  const auto dir = run_dir(a.common, config);
  write_config(dir, config);
  const auto tc = config.train();
  const bool relu = config.as<bool>("train.relu_feature_layers");
  nn::TrainResult result;
  if (a.data.size() == 1) {
    if (a.triplet) throw ConfigError("--triplet needs at least two sensor datasets");
    data::Dataset ds = data::read_dataset(a.data.front());
    if (a.test_samples > 0) {
      if (std::size_t(a.test_samples) >= ds.samples.size())
        throw ConfigError("--test-samples must be smaller than the dataset");
      std::vector<std::size_t> idx(ds.samples.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(config.as<std::uint64_t>("seed"), 0x5b1e));
      std::shuffle(idx.begin(), idx.end(), rng);
      data::Dataset test{ds.meta, {}}, train{ds.meta, {}};
      for (std::size_t i = 0; i < idx.size(); ++i)
        (i < std::size_t(a.test_samples) ? test : train).samples.push_back(ds.samples[idx[i]]);
      data::write_dataset((dir / "test.rskd").string(), test);
      ds = std::move(train);
    }
    const auto arch = nn::Architecture::canonical(ds.meta.label_dim, relu);
    result = nn::train(nn::init_model(arch, tc.seed), ds, tc);
  } else if (a.data.size() > 1) {
    adapt::MultiSensorDataset msd;
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
      adapt::SensorData sd;
      sd.dataset = data::read_dataset(a.data[k]);
      sd.id = dataset_id(sd.dataset, k);
      sd.board = static_cast<int>(k);
      ids.push_back(sd.id);
      msd.add(std::move(sd));
    }
    result = adapt::train_multisensor(msd, ids, tc, a.triplet, relu);
  } else {
    throw ConfigError("train needs at least one --data file");
  }
  const fs::path out = a.output.empty() ? dir / "model.rskm" : fs::path(a.output);
  nn::save_model(out.string(), result.model);
  write_text((dir / "train_log.csv").string(), result.log.to_csv());
  std::cout << out.string() << "\n";
  return ok;
}

// ---- adapt ------------------------------------------------------------------

struct AdaptArgs {
  Common common;
  std::string model;
  std::string lines;
  std::vector<std::string> source;
  std::string output;
};

int cmd_adapt(AdaptArgs& a) {
  const auto config = resolve_config(a.common);
  const auto dir = run_dir(a.common, config);
  write_config(dir, config);
  const fs::path out = a.output.empty() ? dir / "adapted.rskm" : fs::path(a.output);
  const auto budget = static_cast<std::size_t>(config.as<int>("adapt.budget"));
  const auto model_bytes = read_file(a.model);
  if (budget == 0) {
    write_file(out.string(), model_bytes);  // no adaptation: the input model as is
    std::cout << out.string() << "\n";
    return ok;
  }
  const nn::MlpModel model = nn::decode_model(model_bytes);
  if (a.lines.empty()) throw ConfigError("adapt needs --lines (unlabeled target lines)");
  if (a.source.empty()) throw ConfigError("adapt needs at least one --source dataset");
  const auto lines = data::decode_lines(read_file(a.lines));
  const auto set = adapt::AdaptationSet::take(lines, budget);
  std::vector<data::Matrices> parts;
  for (const auto& f : a.source) {
    const auto ds = data::read_dataset(f);
    if (ds.meta.label_dim != model.arch.out_dim())
      throw DimensionError("source dataset " + f + " has label_dim " + std::to_string(ds.meta.label_dim) +
                           " but the model outputs " + std::to_string(model.arch.out_dim()));
    parts.push_back(data::to_matrices(ds));
  }
  const auto tc = config.train();
  const auto split = adapt::split_rows(data::concat(parts), tc.validation_fraction, tc.seed);
  const auto result =
      adapt::self_supervised_adapt(model, set, split.train, split.val, tc, config.adapt_options());
  nn::save_model(out.string(), result.model);
  write_text((dir / "adapt_log.csv").string(), result.log.to_csv());
  std::cout << out.string() << "\n";
  return ok;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string model;
  std::vector<std::string> data;
  std::string format = "markdown";
  std::string name = "Model";
};

void write_reports(const fs::path& dir, const std::vector<eval::EvalReport>& reports,
                   const std::string& format) {
  write_text((dir / "report.json").string(), eval::render_report(reports, eval::ReportFormat::json));
  write_text((dir / "report.csv").string(), eval::render_report(reports, eval::ReportFormat::csv));
  write_text((dir / "report.md").string(), eval::render_report(reports, eval::ReportFormat::markdown));
  std::cout << eval::render_report(reports, eval::parse_report_format(format));
}

int cmd_eval(EvalArgs& a) {
  eval::parse_report_format(a.format);
  const auto config = resolve_config(a.common);
  const auto dir = run_dir(a.common, config);
  write_config(dir, config);
  if (a.model.empty()) {
    if (config.as<std::string>("preset").empty())
      throw ConfigError("eval needs --model and --data, or an experiment --preset");
    const auto result = exp::run_experiment(config, a.common.jobs, note);
    for (const auto& [file, text] : result.artifacts) write_text((dir / file).string(), text);
    write_reports(dir, result.reports, a.format);
    return ok;
  }
  if (a.data.empty()) throw ConfigError("eval needs at least one --data file");
  const auto model = nn::load_model(a.model);
  std::vector<eval::FoldResult> folds;
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    const auto ds = data::read_dataset(a.data[k]);
    if (ds.meta.label_dim != model.arch.out_dim())
      throw DimensionError("dataset " + a.data[k] + " has label_dim " +
                           std::to_string(ds.meta.label_dim) + " but the model outputs " +
                           std::to_string(model.arch.out_dim()));
    const auto m = data::to_matrices(ds);
    folds.push_back(eval::score_fold(dataset_id(ds, k), nn::predict(model, m.X), m.Y));
  }
  write_reports(dir, {eval::summarize(a.name, std::move(folds), config.hash())}, a.format);
  return ok;
}

// ---- stream -----------------------------------------------------------------

struct StreamArgs {
  Common common;
  std::string mode;
  std::string input;
  std::string output;
  std::optional<std::int64_t> interactions;
  std::optional<double> rate;
  bool dry_run = false;
};

std::vector<protocol::FluxFrame> load_frames(const std::string& path) {
  const auto bytes = read_file(path);
  if (path.ends_with(".csv"))
    return protocol::parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  return protocol::decode_stream(bytes).frames;
}

void print_stats(const protocol::DecodeStats& s) {
  std::cerr << "frames=" << s.frames << " crc_failures=" << s.crc_failures
            << " skipped_bytes=" << s.skipped_bytes
            << " timestamp_regressions=" << s.timestamp_regressions << "\n";
}

int cmd_stream(StreamArgs& a) {
  if (a.mode == "record") {
    const auto config = resolve_config(a.common);
    const auto dir = run_dir(a.common, config);
    auto sensor = exp::make_single_sensor(config);
    const std::int64_t n =
        a.interactions.value_or(std::int64_t(config.as<int>("data.passes")) * data::kGridLocations * 6);
    if (n < 1) throw ConfigError("--interactions must be >= 1");
    const auto raw = data::record_snake_session(sensor, n, config.protocol_options().seed);
    const auto log = data::to_frames(raw);
    const fs::path out = a.output.empty() ? dir / "stream.bin" : fs::path(a.output);
    write_file(out.string(), protocol::encode_frames(log.frames));
    std::cout << out.string() << "\n";
    return ok;
  }
  if (a.input.empty()) throw ConfigError("stream " + a.mode + " needs --input");
  if (a.mode == "decode") {
    const auto res = protocol::decode_stream(read_file(a.input));
    const auto csv = protocol::to_csv(res.frames);
    if (a.output.empty())
      std::cout << csv;
    else
      write_text(a.output, csv);
    print_stats(res.stats);
    return ok;
  }
  if (a.mode == "replay") {
    double rate = a.rate.value_or(0.0);
    if (!a.rate) {
      const auto config = resolve_config(a.common);
      rate = config.as<double>("stream.max_rate_hz");
    }
    const auto frames = load_frames(a.input);
    const auto schedule = protocol::replay_schedule(frames, rate);
    if (a.dry_run) {
      std::cerr << "frames=" << frames.size() << " duration_s="
                << (schedule.empty() ? 0.0 : schedule.back()) << "\n";
      return ok;
    }
    std::ofstream file;
    if (!a.output.empty()) {
      file.open(a.output);
      if (!file) throw IoError("cannot write " + a.output);
    }
    std::ostream& out = a.output.empty() ? std::cout : file;
    out << protocol::csv_header() << "\n";
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      std::this_thread::sleep_until(t0 + std::chrono::duration<double>(schedule[i]));
      out << protocol::to_csv_line(frames[i]) << "\n";
    }
    out.flush();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "frames=" << frames.size() << " elapsed_s=" << elapsed << "\n";
    return ok;
  }
  throw ConfigError("unknown stream mode '" + a.mode + "'");
}

int cmd_presets() {
  for (const auto& p : exp::presets()) {
    std::cout << p.name << "\n  " << p.description << "\n";
    for (const auto& [k, v] : p.overrides.items()) std::cout << "    " << k << " = " << v.dump() << "\n";
  }
  return ok;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"reskin: simulated magnetic skin sensing, decoding and self-supervised adaptation"};
  app.require_subcommand(1);
  app.footer("Configuration keys (defaults):\n" + cfg::keys_help() +
             "\nExit codes: 0 success, 2 config error, 3 I/O error, 4 numerical failure.\n");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "simulate datasets and adaptation lines");
  add_common(c_sim, sim.common);
  c_sim->add_option("--passes", sim.passes, "shorthand for --set data.passes=N");
  c_sim->add_flag("--csv", sim.csv, "also write each dataset as CSV");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a decoder on one or more datasets");
  add_common(c_train, tr.common);
  c_train->add_option("-d,--data", tr.data, "dataset files (several: multi-sensor training)")->required();
  c_train->add_flag("--triplet", tr.triplet, "add the triplet loss (multi-sensor only)");
  c_train->add_option("--test-samples", tr.test_samples,
                      "hold out this many random samples as test.rskd (single dataset)");
  c_train->add_option("-o,--output", tr.output, "model path (default: <run dir>/model.rskm)");

  AdaptArgs ad;
  auto* c_adapt = app.add_subcommand("adapt", "adapt a model to a new sensor from unlabeled lines");
  add_common(c_adapt, ad.common);
  c_adapt->add_option("-m,--model", ad.model, "input model")->required();
  c_adapt->add_option("-l,--lines", ad.lines, "unlabeled target lines (.rskl)");
  c_adapt->add_option("--source", ad.source, "labeled source datasets the model was trained on");
  c_adapt->add_option("-o,--output", ad.output, "model path (default: <run dir>/adapted.rskm)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a model, or run an experiment preset");
  add_common(c_eval, ev.common);
  c_eval->add_option("-m,--model", ev.model, "model to evaluate");
  c_eval->add_option("-d,--data", ev.data, "test datasets (one fold each)");
  c_eval->add_option("-f,--format", ev.format, "stdout format: json, csv or markdown")
      ->capture_default_str();
  c_eval->add_option("--name", ev.name, "condition name in the report")->capture_default_str();

  StreamArgs st;
  auto* c_stream = app.add_subcommand("stream", "record, decode or replay wire-format frame streams");
  add_common(c_stream, st.common);
  c_stream->add_option("mode", st.mode, "record, decode or replay")
      ->required()
      ->check(CLI::IsMember({"record", "decode", "replay"}));
  c_stream->add_option("-i,--input", st.input, "frame file (.bin wire format, or .csv for replay)");
  c_stream->add_option("-o,--output", st.output, "output file (default: stdout / run dir)");
  c_stream->add_option("--interactions", st.interactions, "record: number of interactions");
  c_stream->add_option("--rate", st.rate, "replay: maximum frame rate in Hz (0: recorded pace only)");
  c_stream->add_flag("--dry-run", st.dry_run, "replay: print the schedule length without waiting");

  app.add_subcommand("presets", "list experiment presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return config_error;
  }

  try {
    if (*c_sim) return cmd_simulate(sim);
    if (*c_train) return cmd_train(tr);
    if (*c_adapt) return cmd_adapt(ad);
    if (*c_eval) return cmd_eval(ev);
    if (*c_stream) return cmd_stream(st);
    return cmd_presets();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return config_error;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return io_error;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_error;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  return run(static_cast<int>(args.size()), argv.data());
}

}  // namespace reskin::cli
