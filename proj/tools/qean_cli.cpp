// qean: synthesize, train, generate, evaluate and verify.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qean/features.hpp"
#include "qean/io.hpp"
#include "qean/metrics.hpp"
#include "qean/model.hpp"
#include "qean/run_config.hpp"
#include "qean/training.hpp"
#include "qean/verify.hpp"

namespace fs = std::filesystem;
using namespace qean;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("QEAN_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw UsageError("QEAN_SEED must be a nonnegative integer");
  return v;
}

fs::path parent_dir(const fs::path& file) {
  const fs::path p = file.parent_path();
  return p.empty() ? fs::path(".") : p;
}

void echo_config(const fs::path& dir, const std::string& command, const std::string& body) {
  write_file_atomic(dir / (command + ".conf"), "# effective " + command + " configuration\n" + body);
}

/// Directories holding a stream pair: `dir` itself and its immediate
/// subdirectories, in name order.
std::vector<fs::path> pair_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  auto has_pair = [](const fs::path& d) {
    return fs::exists(d / "audio.csv") && fs::exists(d / "motion.csv");
  };
  if (has_pair(dir)) out.push_back(dir);
  std::vector<fs::path> subs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && has_pair(e.path())) subs.push_back(e.path());
  std::sort(subs.begin(), subs.end());
  out.insert(out.end(), subs.begin(), subs.end());
  return out;
}

Matrix load_kind(const fs::path& path, StreamKind kind) {
  Stream s = load_stream(path);
  if (s.meta.kind != kind)
    throw Error(Errc::MetaMismatch, path.string() + " is a " + stream_kind_name(s.meta.kind) +
                                        " stream, expected " + stream_kind_name(kind));
  return std::move(s.data);
}

/// Motion streams of a set directory (recursing one level), in path order.
std::vector<fs::path> motion_files(const fs::path& dir) {
  std::vector<fs::path> out;
  auto scan = [&](const fs::path& d) {
    for (const auto& e : fs::directory_iterator(d)) {
      if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
      if (!fs::exists(meta_path(e.path()))) continue;
      if (meta_from_string(read_file(meta_path(e.path()))).kind == StreamKind::Motion)
        out.push_back(e.path());
    }
  };
  scan(dir);
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) scan(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// `x/motion.csv` ↔ `x/audio.csv`, `x/run3_motion.csv` ↔ `x/run3_audio.csv`.
fs::path paired_audio(const fs::path& motion) {
  std::string name = motion.filename().string();
  const auto at = name.rfind("motion");
  if (at == std::string::npos)
    throw Error(Errc::MalformedFile, "cannot pair " + motion.string() + " with audio: name lacks 'motion'");
  name.replace(at, 6, "audio");
  return motion.parent_path() / name;
}

int cmd_verify(const std::string& suite) {
  const auto reports = run_suite(suite, std::cout);
  std::size_t checks = 0, failures = 0;
  for (const SuiteReport& r : reports) {
    checks += r.checks.size();
    failures += r.failures();
  }
  std::cout << "verify " << suite << ": " << checks << " checks, " << failures << " failed\n";
  if (failures) {
    std::cout << "failing properties:";
    for (const SuiteReport& r : reports)
      for (const CheckResult& c : r.checks)
        if (!c.pass) std::cout << ' ' << c.name;
    std::cout << '\n';
  }
  return failures ? static_cast<int>(Exit::VerifyFailed) : 0;
}

int cmd_synth(const fs::path& out, double seconds, std::uint64_t seed, std::size_t beat_period,
              std::size_t fps) {
  if (auto s = env_seed()) seed = *s;
  if (!(seconds > 0.0)) throw UsageError("--seconds must be positive");
  if (beat_period < 2) throw UsageError("--beat-period must be at least 2");
  const SynthPair p = synth_pair(seed, seconds, fps, beat_period);
  fs::create_directories(out);
  save_stream(out / "audio.csv", p.audio, make_meta(StreamKind::Audio, p.audio.rows(), fps));
  save_stream(out / "motion.csv", p.motion, make_meta(StreamKind::Motion, p.motion.rows(), fps));
  echo_config(out, "synth",
              "seconds = " + format_double(seconds) + "\nseed = " + std::to_string(seed) +
                  "\nbeat_period = " + std::to_string(beat_period) + "\nfps = " + std::to_string(fps) + "\n");
  std::cout << "wrote " << p.audio.rows() << " frames to " << out.string() << "\n";
  return 0;
}

RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig rc;
  if (!config_path.empty()) {
    if (!fs::exists(config_path)) throw UsageError("config file " + config_path + " does not exist");
    rc = parse_run_config(read_file(config_path));
  }
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
    rc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (auto s = env_seed()) rc.train.rng_seed = *s;
  rc.validate();
  return rc;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets, const fs::path& data_dir,
              const fs::path& ckpt, std::uint64_t init_seed, std::size_t log_every) {
  if (!fs::is_directory(data_dir)) throw UsageError("data directory " + data_dir.string() + " does not exist");
  const RunConfig rc = load_run_config(config_path, sets);
  const std::vector<fs::path> dirs = pair_dirs(data_dir);
  if (dirs.empty()) throw UsageError("no audio.csv/motion.csv pair under " + data_dir.string());
  std::vector<TrainingPair> data;
  for (const fs::path& d : dirs)
    data.push_back({load_kind(d / "audio.csv", StreamKind::Audio), load_kind(d / "motion.csv", StreamKind::Motion)});

  ModelWeights w = init_weights(rc.model, init_seed);
  const auto trace = train(w, data, rc.model, rc.train, [&](const TraceRow& r) {
    if (log_every && (r.step % log_every == 0 || r.step + 1 == rc.train.total_steps))
      std::cerr << "step " << r.step << " lr " << r.lr << " loss " << r.loss << "\n";
  });
  const fs::path out_dir = parent_dir(ckpt);
  fs::create_directories(out_dir);
  save_checkpoint(ckpt, rc.model, w);
  write_file_atomic(out_dir / "loss.csv", loss_trace_csv(trace));
  echo_config(out_dir, "train",
              rc.to_string() + "init_seed = " + std::to_string(init_seed) + "\npairs = " +
                  std::to_string(data.size()) + "\n");
  if (!trace.empty())
    std::cout << "loss " << format_double(trace.front().loss) << " -> " << format_double(trace.back().loss) << "\n";
  return 0;
}

int cmd_generate(const fs::path& ckpt_path, const fs::path& music, const fs::path& seed_path,
                 std::size_t frames, const fs::path& out) {
  for (const fs::path& p : {ckpt_path, music, seed_path})
    if (!fs::exists(p)) throw UsageError(p.string() + " does not exist");
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const Matrix audio = load_kind(music, StreamKind::Audio);
  const Matrix seed_motion = load_kind(seed_path, StreamKind::Motion);
  const std::size_t s = ck.config.seed_motion_frames;
  if (seed_motion.rows() < s)
    throw Error(Errc::DimensionMismatch, "seed motion has " + std::to_string(seed_motion.rows()) +
                                             " frames, the model needs " + std::to_string(s));
  const Matrix gen = autoregressive_generate(seed_motion.row_block(0, s), audio, frames, ck.weights, ck.config);
  fs::create_directories(parent_dir(out));
  save_stream(out, gen, make_meta(StreamKind::Motion, gen.rows(), ck.config.fps));
  echo_config(parent_dir(out), "generate",
              "ckpt = " + ckpt_path.string() + "\nmusic = " + music.string() + "\nseed_motion = " +
                  seed_path.string() + "\nframes = " + std::to_string(frames) + "\n");
  std::cout << "wrote " << gen.rows() << " frames to " << out.string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& ref, const fs::path& gen, const std::string& metric_list, const fs::path& out) {
  for (const fs::path& d : {ref, gen})
    if (!fs::is_directory(d)) throw UsageError(d.string() + " is not a directory");
  std::vector<std::string> metrics;
  {
    std::stringstream ss(metric_list);
    std::string m;
    while (std::getline(ss, m, ','))
      if (!m.empty()) {
        if (m != "fid" && m != "dist" && m != "beat_align")
          throw UsageError("unknown metric '" + m + "' (fid, dist, beat_align)");
        metrics.push_back(m);
      }
  }
  EvalInput in;
  for (const fs::path& p : motion_files(ref)) in.reference.push_back(load_kind(p, StreamKind::Motion));
  for (const fs::path& p : motion_files(gen)) {
    in.generated.push_back(load_kind(p, StreamKind::Motion));
    if (std::find(metrics.begin(), metrics.end(), "beat_align") != metrics.end())
      in.generated_audio.push_back(load_kind(paired_audio(p), StreamKind::Audio));
  }
  const std::string report = eval_report(evaluate(in, metrics));
  fs::create_directories(parent_dir(out));
  write_file_atomic(out, report);
  echo_config(parent_dir(out), "eval",
              "ref = " + ref.string() + "\ngen = " + gen.string() + "\nmetrics = " + metric_list + "\n");
  std::cout << report;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Music-to-dance generation with quaternion rotary attention"};
  app.require_subcommand(1);

  std::string suite = "all";
  auto* verify = app.add_subcommand("verify", "Run an invariant suite");
  std::vector<std::string> suites = suite_names();
  suites.push_back("all");
  verify->add_option("--suite", suite, "Suite to run")->check(CLI::IsMember(suites));

  fs::path synth_out;
  double seconds = 0.0;
  std::uint64_t synth_seed = 0;
  std::size_t beat_period = 30, fps = 60;
  auto* synth = app.add_subcommand("synth", "Write a synthetic beat-locked audio/motion pair");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seconds", seconds, "Duration in seconds")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--beat-period", beat_period, "Frames between beats");
  synth->add_option("--fps", fps, "Frames per second");

  std::string config_path;
  std::vector<std::string> sets;
  fs::path data_dir, ckpt;
  std::uint64_t init_seed = 1;
  std::size_t log_every = 500;
  auto* trainc = app.add_subcommand("train", "Train a model on stream pairs");
  trainc->add_option("--config", config_path, "key = value config file");
  trainc->add_option("--set", sets, "Override one config key (key=value)");
  trainc->add_option("--data", data_dir, "Directory of audio.csv/motion.csv pairs")->required();
  trainc->add_option("--out", ckpt, "Checkpoint path")->required();
  trainc->add_option("--init-seed", init_seed, "Weight initialization seed");
  trainc->add_option("--log-every", log_every, "Progress interval in steps (0 = quiet)");

  fs::path gen_ckpt, music, seed_motion, gen_out;
  std::size_t frames = 0;
  auto* gen = app.add_subcommand("generate", "Autoregressively generate motion for music");
  gen->add_option("--ckpt", gen_ckpt, "Checkpoint")->required();
  gen->add_option("--music", music, "Audio stream")->required();
  gen->add_option("--seed-motion", seed_motion, "Motion stream whose first frames seed generation")->required();
  gen->add_option("--frames", frames, "Frames to generate")->required();
  gen->add_option("--out", gen_out, "Output motion stream")->required();

  fs::path ref_dir, gen_dir, eval_out;
  std::string metric_list = "fid,dist";
  auto* eval = app.add_subcommand("eval", "Compare generated motion against references");
  eval->add_option("--ref", ref_dir, "Reference motion set")->required();
  eval->add_option("--gen", gen_dir, "Generated motion set")->required();
  eval->add_option("--metrics", metric_list, "Comma list from fid, dist, beat_align");
  eval->add_option("--out", eval_out, "Report path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(Exit::Usage);
  }

  try {
    if (*verify) return cmd_verify(suite);
    if (*synth) return cmd_synth(synth_out, seconds, synth_seed, beat_period, fps);
    if (*trainc) return cmd_train(config_path, sets, data_dir, ckpt, init_seed, log_every);
    if (*gen) return cmd_generate(gen_ckpt, music, seed_motion, frames, gen_out);
    if (*eval) return cmd_eval(ref_dir, gen_dir, metric_list, eval_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return static_cast<int>(Exit::Usage);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e.code()));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(Exit::Runtime);
  }
  return static_cast<int>(Exit::Usage);
}
