#include "eegadapt/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "eegadapt/harness.hpp"
#include "eegadapt/net.hpp"
#include "eegadapt/signal.hpp"
#include "eegadapt/train.hpp"
#include "eegadapt/trial_file.hpp"

namespace fs = std::filesystem;

namespace eegadapt {

namespace {

std::string default_data_dir() {
  const char* env = std::getenv(kDataDirEnv);
  return env && *env ? env : ".";
}

// Files stay as given; directories expand to their *.eegt files in name order.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".eegt") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

Dataset load_sessions(const std::vector<fs::path>& files) {
  Dataset d;
  for (const auto& f : files) {
    try {
      d.push_back(load_trial_file(f).session);
    } catch (const Error& e) {
      throw Error(f.string() + ": " + e.what());
    }
  }
  if (d.empty()) throw Error("no trial files found");
  return d;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::vector<std::size_t> parse_channels(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoul(item)));
  }
  if (out.empty()) throw InvalidArgument("--blocks needs at least one channel count");
  return out;
}

struct TrainFlags {
  int epochs = 30;
  double lr = 1e-2;
  double momentum = 0.9;
  std::size_t batch = 32;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;
  double ft_scale = 0.1;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--lr", lr, "Learning rate")->capture_default_str();
    app->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
    app->add_option("--batch", batch, "Mini-batch size")->capture_default_str();
    app->add_option("--bn-momentum", bn_momentum, "BN running-stat momentum")->capture_default_str();
    app->add_option("--seed", seed, "Seed for initialisation and shuffling")->capture_default_str();
    app->add_option("--ft-lr-scale", ft_scale, "Learning-rate scale for fine-tuning")
        ->capture_default_str();
  }
  TrainConfig config() const {
    TrainConfig c;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.momentum = momentum;
    c.batch_size = batch;
    c.bn_momentum = bn_momentum;
    c.seed = seed;
    c.fine_tune_lr_scale = ft_scale;
    return c;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming adaptive EEG motor-imagery classification"};
  app.name("eegadapt");
  app.require_subcommand(1);

  // synth
  SynthConfig synth;
  std::string synth_out = default_data_dir();
  std::optional<double> synth_highpass;
  std::optional<double> synth_resample;
  auto* synth_cmd = app.add_subcommand("synth", "Write synthetic sessions as trial files");
  synth_cmd->add_option("--out", synth_out, "Output directory")->capture_default_str();
  synth_cmd->add_option("--subjects", synth.num_subjects)->capture_default_str();
  synth_cmd->add_option("--sessions", synth.sessions_per_subject)->capture_default_str();
  synth_cmd->add_option("--trials", synth.trials_per_session)->capture_default_str();
  synth_cmd->add_option("--classes", synth.num_classes)->capture_default_str();
  synth_cmd->add_option("--channels", synth.channels)->capture_default_str();
  synth_cmd->add_option("--samples", synth.samples)->capture_default_str();
  synth_cmd->add_option("--fs", synth.fs)->capture_default_str();
  synth_cmd->add_option("--mixing", synth.subject_mixing_scale, "Subject mixing scale")
      ->capture_default_str();
  synth_cmd->add_option("--drift", synth.subject_gain_drift, "Session gain drift")
      ->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise_std, "Sensor noise std")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--highpass", synth_highpass, "Apply a high-pass filter (Hz)");
  synth_cmd->add_option("--resample", synth_resample, "Resample to this rate (Hz)");

  // train
  std::vector<std::string> train_data;
  std::optional<int> train_holdout;
  std::string train_out;
  std::string train_blocks = "24,48,96";
  std::size_t train_kernel = 7;
  std::size_t train_pool = 2;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Cross-subject training of a backbone");
  train_cmd->add_option("--data", train_data, "Trial files or directories");
  train_cmd->add_option("--holdout", train_holdout, "Subject excluded from training");
  train_cmd->add_option("--out", train_out, "Output weight file")->required();
  train_cmd->add_option("--blocks", train_blocks, "Channels per block")->capture_default_str();
  train_cmd->add_option("--kernel", train_kernel)->capture_default_str();
  train_cmd->add_option("--pool", train_pool)->capture_default_str();
  train_flags.add(train_cmd);

  // finetune
  std::string ft_weights;
  std::vector<std::string> ft_data;
  int ft_subject = 0;
  std::string ft_kind = "bnci";
  std::optional<std::size_t> ft_ncal;
  std::string ft_out;
  TrainFlags ft_flags;
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune on a subject's calibration sessions");
  ft_cmd->add_option("--weights", ft_weights, "Pretrained weight file")->required();
  ft_cmd->add_option("--data", ft_data, "Trial files or directories");
  ft_cmd->add_option("--subject", ft_subject, "Subject to calibrate on")->required();
  ft_cmd->add_option("--kind", ft_kind, "Session layout: bnci (1+1) or large (2+3)")
      ->check(CLI::IsMember({"bnci", "large"}))
      ->capture_default_str();
  ft_cmd->add_option("--n-cal", ft_ncal, "Explicit number of calibration sessions");
  ft_cmd->add_option("--out", ft_out, "Output weight file")->required();
  ft_flags.add(ft_cmd);

  // eval
  std::string ev_weights;
  std::vector<std::string> ev_data;
  std::string ev_mode = "adaptive";
  bool ev_buffer = false;
  std::size_t ev_buffer_size = 40;
  std::size_t ev_warmup = 10;
  bool ev_soft = false;
  double ev_beta = 5.0;
  int ev_iters = 10;
  bool ev_shuffle = false;
  std::uint64_t ev_seed = 0;
  std::string ev_report;
  std::string ev_curve;
  std::vector<std::string> ev_pool;
  std::optional<int> ev_subject;
  bool ev_timing = false;
  auto* ev_cmd = app.add_subcommand("eval", "Replay sessions through the engine");
  ev_cmd->add_option("--weights", ev_weights, "Weight file")->required();
  ev_cmd->add_option("--data", ev_data, "Trial files or directories to evaluate");
  ev_cmd->add_option("--subject", ev_subject, "Only evaluate this subject's sessions");
  ev_cmd->add_option("--mode", ev_mode)
      ->check(CLI::IsMember({"online", "adaptive", "offline"}))
      ->capture_default_str();
  ev_cmd->add_flag("--buffer", ev_buffer, "Use a warm-up buffer");
  ev_cmd->add_option("--buffer-size", ev_buffer_size)->capture_default_str();
  ev_cmd->add_option("--warmup", ev_warmup, "Trials during which the buffer is used")
      ->capture_default_str();
  ev_cmd->add_option("--buffer-pool", ev_pool,
                     "Files or directories to draw the buffer from (default: other subjects "
                     "next to the evaluated files)");
  ev_cmd->add_flag("--soft-kmeans", ev_soft, "Re-decide labels with soft k-means");
  ev_cmd->add_option("--beta", ev_beta, "Soft k-means inverse temperature")->capture_default_str();
  ev_cmd->add_option("--kmeans-iters", ev_iters)->capture_default_str();
  ev_cmd->add_flag("--shuffle", ev_shuffle, "Replay trials in a seeded random order");
  ev_cmd->add_option("--seed", ev_seed)->capture_default_str();
  ev_cmd->add_option("--report", ev_report, "JSON report path");
  ev_cmd->add_option("--curve", ev_curve, "CSV cumulative-accuracy curve path");
  ev_cmd->add_flag("--timing", ev_timing, "Include wall time in the report");

  // inspect
  std::string insp_file;
  auto* insp_cmd = app.add_subcommand("inspect", "Validate a trial file and print its header");
  insp_cmd->add_option("file", insp_file, "Trial file")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    err << app.help();
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      fs::create_directories(synth_out);
      Dataset d = generate(synth);
      Preprocessing prep;
      for (auto& s : d) {
        for (auto& t : s.trials) {
          if (synth_highpass) t = highpass(t, *synth_highpass, s.fs);
          if (synth_resample) t = resample(t, s.fs, *synth_resample);
        }
      }
      if (synth_highpass) prep.highpass_hz = *synth_highpass;
      if (synth_resample) {
        prep.resampled_from_hz = synth.fs;
        for (auto& s : d) s.fs = *synth_resample;
      }
      for (const auto& s : d) {
        char name[64];
        std::snprintf(name, sizeof name, "sub-%02d_ses-%02d.eegt", s.subject_id, s.session_id);
        save_trial_file(fs::path(synth_out) / name, s, prep);
      }
      out << "wrote " << d.size() << " sessions to " << synth_out << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      if (train_data.empty()) train_data.push_back(default_data_dir());
      Dataset d = load_sessions(expand_inputs(train_data));
      if (train_holdout) d = split_cross_subject(d, *train_holdout).train;
      NetworkSpec spec;
      spec.in_channels = d.front().trials.front().channels();
      spec.num_classes = static_cast<std::size_t>(d.front().num_classes);
      for (std::size_t c : parse_channels(train_blocks)) spec.blocks.push_back({c, train_kernel, train_pool});
      const TrainingSet set = aligned_training_set(d);
      TrainLog log;
      WeightStore w = train(spec, train_flags.seed, set, train_flags.config(), &log);
      save_weights(spec, w, train_out);
      out << "trained on " << set.trials.size() << " trials; final epoch loss "
          << (log.epoch_losses.empty() ? 0.0 : log.epoch_losses.back()) << "; wrote " << train_out
          << "\n";
      return 0;
    }

    if (ft_cmd->parsed()) {
      LoadedNetwork net = load_weights(ft_weights);
      if (ft_data.empty()) ft_data.push_back(default_data_dir());
      Dataset d = load_sessions(expand_inputs(ft_data));
      Dataset mine;
      for (auto& s : d)
        if (s.subject_id == ft_subject) mine.push_back(std::move(s));
      if (mine.empty()) throw InvalidArgument("no sessions of subject " + std::to_string(ft_subject));
      std::optional<SessionCounts> counts;
      if (ft_ncal) counts = SessionCounts{*ft_ncal, mine.size() - std::min(mine.size(), *ft_ncal)};
      const auto split = split_fine_tuning(std::move(mine),
                                           ft_kind == "bnci" ? DatasetKind::bnci_like
                                                             : DatasetKind::large_like,
                                           counts);
      const TrainingSet set = aligned_training_set(split.calibration);
      WeightStore w = fine_tune(net.spec, net.weights, set, ft_flags.config());
      w.calibration_whitener = calibration_whitener(split.calibration);
      w.round_to_f32();
      save_weights(net.spec, w, ft_out);
      out << "fine-tuned on " << set.trials.size() << " calibration trials; wrote " << ft_out << "\n";
      return 0;
    }

    if (ev_cmd->parsed()) {
      LoadedNetwork net = load_weights(ev_weights);
      if (ev_data.empty()) ev_data.push_back(default_data_dir());
      const auto files = expand_inputs(ev_data);
      Dataset sessions = load_sessions(files);
      if (ev_subject) {
        std::erase_if(sessions, [&](const Session& s) { return s.subject_id != *ev_subject; });
        if (sessions.empty()) throw InvalidArgument("no sessions of subject " + std::to_string(*ev_subject));
      }

      AdaptPolicy policy;
      policy.mode = parse_mode(ev_mode);
      policy.use_buffer = ev_buffer;
      policy.buffer_size = ev_buffer_size;
      policy.warmup_trials = ev_warmup;
      policy.use_soft_kmeans = ev_soft;
      policy.soft_kmeans_beta = ev_beta;
      policy.soft_kmeans_iters = ev_iters;

      Dataset pool_sessions;
      if (ev_buffer && policy.mode != Mode::offline) {
        std::vector<fs::path> pool_files;
        if (ev_pool.empty()) {
          pool_files = expand_inputs({files.front().parent_path().empty()
                                          ? std::string(".")
                                          : files.front().parent_path().string()});
        } else {
          pool_files = expand_inputs(ev_pool);
        }
        pool_sessions = load_sessions(pool_files);
      }

      std::vector<ReplayReport> reports;
      for (const auto& s : sessions) {
        std::vector<Trial> pool;
        for (const auto& p : pool_sessions) {
          // The default pool is other subjects; explicit pools are used as given.
          if (ev_pool.empty() && p.subject_id == s.subject_id) continue;
          pool.insert(pool.end(), p.trials.begin(), p.trials.end());
        }
        reports.push_back(replay(net.spec, net.weights, s, policy,
                                 {ev_shuffle, ev_seed, ev_timing}, pool));
      }

      const std::vector<double> curve =
          reports.size() == 1 ? reports.front().cumulative_accuracy : mean_curve(reports);
      double mean_final = 0.0;
      for (const auto& r : reports) mean_final += r.final_accuracy;
      mean_final /= static_cast<double>(reports.size());

      nlohmann::json doc;
      doc["weights"] = ev_weights;
      doc["policy"] = policy_to_json(policy);
      doc["shuffle"] = ev_shuffle;
      doc["seed"] = ev_seed;
      doc["mean_final_accuracy"] = mean_final;
      doc["mean_curve"] = curve;
      doc["sessions"] = nlohmann::json::array();
      for (const auto& r : reports) doc["sessions"].push_back(report_to_json(r));
      if (!ev_report.empty()) write_text(ev_report, doc.dump(2) + "\n");
      if (!ev_curve.empty()) write_text(ev_curve, curve_csv(curve));
      for (const auto& r : reports) {
        out << "subject " << r.subject_id << " session " << r.session_id << ": " << ev_mode
            << " final accuracy " << r.final_accuracy << " (" << r.trials.size() << " trials)\n";
      }
      out << "mean final accuracy " << mean_final << "\n";
      return 0;
    }

    if (insp_cmd->parsed()) {
      const LoadedSession s = load_trial_file(insp_file);
      nlohmann::json j = nlohmann::json::parse(header_to_json(s.header));
      std::map<int, int> hist;
      for (const auto& t : s.session.trials) ++hist[t.label ? *t.label : -1];
      nlohmann::json h = nlohmann::json::object();
      for (auto [k, v] : hist) h[std::to_string(k)] = v;
      j["label_histogram"] = h;
      out << j.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace eegadapt
