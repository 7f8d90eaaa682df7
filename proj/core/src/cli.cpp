#include "dfuse/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dfuse/checkpoint.hpp"
#include "dfuse/config.hpp"
#include "dfuse/corpus.hpp"
#include "dfuse/errors.hpp"
#include "dfuse/fileio.hpp"
#include "dfuse/fuse.hpp"
#include "dfuse/gradcheck.hpp"
#include "dfuse/report_io.hpp"
#include "dfuse/rng.hpp"
#include "dfuse/train.hpp"
#include "dfuse/zeroeval.hpp"

namespace dfuse {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Typed option access that snapshots every resolved value for the manifest.
class Options {
 public:
  explicit Options(KeyValueConfig kv) : kv_(std::move(kv)) {}

  std::string str(std::string_view key, std::string_view fallback) {
    auto v = kv_.get_string(key, fallback);
    resolved_[KeyValueConfig::normalize_key(key)] = v;
    return v;
  }
  std::string required(std::string_view key) {
    auto v = kv_.require_string(key);
    resolved_[KeyValueConfig::normalize_key(key)] = v;
    return v;
  }
  std::optional<std::string> optional(std::string_view key) {
    if (!kv_.has(key)) {
      kv_.get_string(key, "");
      return std::nullopt;
    }
    return required(key);
  }
  bool has(std::string_view key) const { return kv_.has(key); }
  std::uint64_t u64(std::string_view key, std::uint64_t fallback) {
    auto v = kv_.get_u64(key, fallback);
    resolved_[KeyValueConfig::normalize_key(key)] = v;
    return v;
  }
  std::size_t size(std::string_view key, std::size_t fallback) {
    return static_cast<std::size_t>(u64(key, fallback));
  }
  double real(std::string_view key, double fallback) {
    auto v = kv_.get_double(key, fallback);
    resolved_[KeyValueConfig::normalize_key(key)] = v;
    return v;
  }
  bool flag(std::string_view key, bool fallback) {
    auto v = kv_.get_bool(key, fallback);
    resolved_[KeyValueConfig::normalize_key(key)] = v;
    return v;
  }

  // --seed, then $DFUSE_SEED, then 0.
  std::uint64_t seed() {
    if (kv_.has("seed")) return u64("seed", 0);
    kv_.get_string("seed", "");
    std::uint64_t s = 0;
    if (const char* env = std::getenv("DFUSE_SEED"); env != nullptr && *env != '\0') {
      KeyValueConfig tmp;
      tmp.set("DFUSE_SEED", env);
      s = tmp.get_u64("DFUSE_SEED", 0);
    }
    resolved_["seed"] = s;
    return s;
  }

  void reject_unknown() const {
    const auto unknown = kv_.unused_keys();
    if (!unknown.empty()) throw UsageError(fmt::format("unknown option --{}", unknown.front()));
  }

  const json& resolved() const { return resolved_; }

 private:
  KeyValueConfig kv_;
  json resolved_ = json::object();
};

struct Input {
  std::string path;
  std::string bytes;
};

Input read_input(const std::string& path, std::string_view role) {
  if (!fs::exists(path)) throw UsageError(fmt::format("{} file '{}' does not exist", role, path));
  return {path, read_file(path)};
}

class Manifest {
 public:
  Manifest(std::string command, const Options& opts) : command_(std::move(command)), opts_(opts) {}

  void input(const Input& in) { inputs_[in.path] = fmt::format("{:08x}", crc32(in.bytes)); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  void write(const fs::path& primary) const {
    json j{{"command", command_},
           {"config", opts_.resolved()},
           {"inputs", inputs_},
           {"outputs", outputs_}};
    if (opts_.resolved().contains("seed")) j["seed"] = opts_.resolved().at("seed");
    fs::path path = primary;
    path += ".manifest.json";
    write_file_atomic(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  const Options& opts_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

fs::path jsonl_sibling(const fs::path& out) {
  if (out.extension() == ".jsonl") {
    throw UsageError(fmt::format("--out '{}' must not end in .jsonl (that name is the mirror)",
                                 out.string()));
  }
  fs::path p = out;
  p.replace_extension(".jsonl");
  return p;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const auto end = s.find(sep, begin);
    out.push_back(s.substr(begin, end == std::string::npos ? std::string::npos : end - begin));
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return out;
}

std::vector<double> parse_alphas(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s, ',')) {
    KeyValueConfig tmp;
    tmp.set("alpha", item);
    out.push_back(tmp.get_double("alpha", 0.0));
  }
  return out;
}

std::vector<std::string> parse_templates(const std::string& s) { return split_list(s, '|'); }

Checkpoint load_model(const Input& in) { return decode_checkpoint(in.bytes); }

int cmd_gen_corpus(Options& o, std::ostream& out) {
  SynthConfig c;
  c.n_concepts = o.size("n_concepts", c.n_concepts);
  c.latent_dim = o.size("latent_dim", c.latent_dim);
  c.d_v = o.size("d_v", c.d_v);
  c.d_t = o.size("d_t", c.d_t);
  c.frames_per_video = o.size("frames_per_video", c.frames_per_video);
  c.noise_sigma = o.real("noise_sigma", c.noise_sigma);
  c.n_labeled_train = o.size("n_labeled_train", c.n_labeled_train);
  c.n_labeled_val = o.size("n_labeled_val", c.n_labeled_val);
  c.n_unlabeled = o.size("n_unlabeled", c.n_unlabeled);
  c.n_eval = o.size("n_eval", c.n_eval);
  c.n_image_train = o.size("n_image_train", c.n_image_train);
  c.n_image_eval = o.size("n_image_eval", c.n_image_eval);
  c.identity_maps = o.flag("identity_maps", c.identity_maps);
  c.seed = o.seed();
  const fs::path path = o.required("out");
  o.reject_unknown();
  c.validate();

  Manifest m("gen-corpus", o);
  save_corpus(path, gen_corpus(c));
  m.output(path);
  m.write(path);
  out << fmt::format("wrote corpus {}\n", path.string());
  return kExitOk;
}

int cmd_pretrain_teacher(Options& o, std::ostream& out) {
  const auto corpus_in = read_input(o.required("corpus"), "corpus");
  const fs::path path = o.required("out");
  EncoderConfig enc;
  enc.hidden_dim = o.size("hidden_dim", enc.hidden_dim);
  enc.embed_dim = o.size("embed_dim", enc.embed_dim);
  enc.n_frames = o.size("n_frames", enc.n_frames);
  LossConfig loss;
  loss.sigma = o.real("sigma", loss.sigma);
  TrainConfig train;
  train.lr = o.real("lr", 1e-3);
  train.batch_size_labeled = o.size("batch_size", 64);
  train.max_steps = o.size("max_steps", 1500);
  train.eval_every = o.size("eval_every", 250);
  train.weight_decay = o.real("weight_decay", train.weight_decay);
  const std::uint64_t seed = o.seed();
  train.seed = seed;
  enc.seed = derive_seed(seed, "teacher-init");
  o.reject_unknown();

  const Corpus corpus = parse_corpus(corpus_in.bytes);
  enc.input_dim_video = corpus.meta().d_v;
  enc.input_dim_text = corpus.meta().d_t;
  const PairSet images = corpus.pairs(Split::kImageTrain);
  const PairSet held_out = corpus.pairs(Split::kImageEval);

  auto params = pretrain_teacher(images, enc, train, loss, [&](const ProgressEntry& e) {
    out << format_progress(e) << '\n';
  });
  Checkpoint ckpt{enc, LossConfig{loss.sigma, 0.0, false}, std::move(params), train.max_steps, 0.0};
  ckpt.val_loss = held_out.size() >= 2
                      ? validation_loss(ckpt.params, held_out, enc, loss.sigma,
                                        train.batch_size_labeled)
                      : 0.0;

  Manifest m("pretrain-teacher", o);
  m.input(corpus_in);
  save_checkpoint(path, ckpt);
  m.output(path);
  m.write(path);
  out << fmt::format("wrote teacher {} (held-out image loss {})\n", path.string(), ckpt.val_loss);
  return kExitOk;
}

int cmd_train_student(Options& o, std::ostream& out) {
  const auto corpus_in = read_input(o.required("corpus"), "corpus");
  const auto teacher_in = read_input(o.required("teacher"), "teacher");
  const fs::path path = o.required("out");
  const auto log_path = o.optional("log");
  const Checkpoint teacher = load_model(teacher_in);
  LossConfig loss;
  loss.sigma = o.real("sigma", teacher.loss.sigma);
  loss.lambda = o.real("lambda", loss.lambda);
  loss.distill_on_labeled = o.flag("distill_on_labeled", loss.distill_on_labeled);
  TrainConfig train;
  train.lr = o.real("lr", train.lr);
  train.batch_size_labeled = o.size("batch_size_labeled", train.batch_size_labeled);
  train.batch_size_unlabeled = o.size("batch_size_unlabeled", train.batch_size_unlabeled);
  train.max_steps = o.size("max_steps", train.max_steps);
  train.eval_every = o.size("eval_every", train.eval_every);
  train.weight_decay = o.real("weight_decay", train.weight_decay);
  train.beta1 = o.real("beta1", train.beta1);
  train.beta2 = o.real("beta2", train.beta2);
  train.eps = o.real("eps", train.eps);
  train.seed = o.seed();
  o.reject_unknown();

  const Corpus corpus = parse_corpus(corpus_in.bytes);
  std::string log;
  auto record = train_student(teacher.params, corpus.pairs(Split::kLabeledTrain),
                              corpus.pairs(Split::kLabeledVal), corpus.unpaired(Split::kUnlabeled),
                              teacher.enc, loss, train, [&](const ProgressEntry& e) {
                                const auto line = format_progress(e);
                                out << line << '\n';
                                log += line + '\n';
                              });

  Manifest m("train-student", o);
  m.input(corpus_in);
  m.input(teacher_in);
  save_checkpoint(path, {teacher.enc, loss, std::move(record.params), record.step, record.val_loss});
  m.output(path);
  if (log_path) {
    write_file_atomic(*log_path, "step\ttrain_loss\tval_loss\n" + log);
    m.output(*log_path);
  }
  m.write(path);
  out << fmt::format("wrote student {} (best step {}, val loss {})\n", path.string(), record.step,
                     record.val_loss);
  return kExitOk;
}

int cmd_fuse(Options& o, std::ostream& out) {
  const auto teacher_in = read_input(o.required("teacher"), "teacher");
  const auto student_in = read_input(o.required("student"), "student");
  const FusionConfig fusion{o.real("alpha", FusionConfig{}.alpha)};
  const fs::path path = o.required("out");
  o.reject_unknown();
  fusion.validate();

  const Checkpoint teacher = load_model(teacher_in);
  const Checkpoint student = load_model(student_in);
  if (teacher.enc != student.enc) {
    throw UsageError("teacher and student checkpoints use different encoder configs");
  }
  Checkpoint fused{teacher.enc, student.loss, fuse_weights(teacher.params, student.params, fusion),
                   0, 0.0};
  Manifest m("fuse", o);
  m.input(teacher_in);
  m.input(student_in);
  save_checkpoint(path, fused);
  m.output(path);
  m.write(path);
  out << fmt::format("wrote fused model {} (alpha {})\n", path.string(), fusion.alpha);
  return kExitOk;
}

struct EvalInputs {
  Input model_in;
  Input corpus_in;
  Checkpoint model;
  EvalBundle bundle;
};

void write_report(const EvalReport& report, const fs::path& path, Manifest& m, std::ostream& out) {
  const auto tsv = report_to_tsv(report);
  write_file_atomic(path, tsv);
  const auto jsonl = jsonl_sibling(path);
  write_file_atomic(jsonl, report_to_jsonl(report));
  m.output(path);
  m.output(jsonl);
  m.write(path);
  out << tsv;
}

int cmd_eval(Options& o, std::ostream& out, bool retrieval) {
  const auto model_in = read_input(o.required("model"), "model");
  const auto corpus_in = read_input(o.required("corpus"), "corpus");
  const Split split = parse_split(o.str("split", "eval"));
  const std::size_t block = retrieval ? o.size("gallery_block", 0) : 0;
  const auto templates =
      retrieval ? std::vector<std::string>{std::string(kDefaultPromptTemplate)}
                : parse_templates(o.str("templates", kDefaultPromptTemplate));
  const fs::path path = o.required("out");
  jsonl_sibling(path);
  o.reject_unknown();

  const Checkpoint model = load_model(model_in);
  const Corpus corpus = parse_corpus(corpus_in.bytes);
  EvalBundle bundle = corpus.eval_bundle(split, model.enc, templates, block);
  bundle.retrieval = retrieval;
  bundle.classification = !retrieval;
  const EvalReport report = evaluate(model.params, bundle);

  Manifest m(retrieval ? "eval-retrieval" : "eval-classify", o);
  m.input(model_in);
  m.input(corpus_in);
  write_report(report, path, m, out);
  return kExitOk;
}

int cmd_sweep_alpha(Options& o, std::ostream& out) {
  const auto teacher_in = read_input(o.required("teacher"), "teacher");
  const auto student_in = read_input(o.required("student"), "student");
  const auto corpus_in = read_input(o.required("corpus"), "corpus");
  const auto alphas = o.has("alphas") ? parse_alphas(o.required("alphas")) : alpha_grid(10);
  const Split split = parse_split(o.str("split", "eval"));
  const std::size_t block = o.size("gallery_block", 0);
  const auto templates = parse_templates(o.str("templates", kDefaultPromptTemplate));
  const fs::path path = o.required("out");
  jsonl_sibling(path);
  o.reject_unknown();

  const Checkpoint teacher = load_model(teacher_in);
  const Checkpoint student = load_model(student_in);
  if (teacher.enc != student.enc) {
    throw UsageError("teacher and student checkpoints use different encoder configs");
  }
  const Corpus corpus = parse_corpus(corpus_in.bytes);
  const auto rows =
      sweep_alpha(teacher.params, student.params, alphas,
                  corpus.eval_bundle(split, teacher.enc, templates, block));

  Manifest m("sweep-alpha", o);
  m.input(teacher_in);
  m.input(student_in);
  m.input(corpus_in);
  const auto tsv = sweep_to_tsv(rows);
  write_file_atomic(path, tsv);
  const auto jsonl = jsonl_sibling(path);
  write_file_atomic(jsonl, sweep_to_jsonl(rows));
  m.output(path);
  m.output(jsonl);
  m.write(path);
  out << tsv;
  return kExitOk;
}

int cmd_report_class_delta(Options& o, std::ostream& out) {
  const auto a_in = read_input(o.required("a"), "report");
  const auto b_in = read_input(o.required("b"), "report");
  const std::size_t top = o.size("top", 25);
  const fs::path path = o.required("out");
  o.reject_unknown();

  const auto deltas = per_class_delta(report_from_jsonl(a_in.bytes), report_from_jsonl(b_in.bytes));
  const auto table = top == 0 ? deltas : truncate_extremes(deltas, top);
  Manifest m("report-class-delta", o);
  m.input(a_in);
  m.input(b_in);
  const auto tsv = class_delta_to_tsv(table);
  write_file_atomic(path, tsv);
  m.output(path);
  m.write(path);
  out << tsv;
  out << fmt::format("# aggregate top1 delta\t{}\n", aggregate_delta(deltas));
  return kExitOk;
}

int cmd_report_rank_dist(Options& o, std::ostream& out) {
  const auto a_in = read_input(o.required("a"), "report");
  const auto b_in = read_input(o.required("b"), "report");
  const fs::path path = o.required("out");
  o.reject_unknown();

  const auto a = report_from_jsonl(a_in.bytes);
  const auto b = report_from_jsonl(b_in.bytes);
  if (!a.retrieval || !b.retrieval) throw UsageError("report-rank-dist needs two retrieval reports");
  const auto rows = rank_distribution(a.retrieval->ranks, b.retrieval->ranks);
  Manifest m("report-rank-dist", o);
  m.input(a_in);
  m.input(b_in);
  write_file_atomic(path, rank_distribution_to_tsv(rows));
  m.output(path);
  m.write(path);
  out << fmt::format("wrote {} rows to {}\n", rows.size(), path.string());
  return kExitOk;
}

int cmd_gradcheck(Options& o, std::ostream& out) {
  GradCheckOptions g;
  g.trials = o.size("trials", g.trials);
  g.batch = o.size("batch", g.batch);
  g.max_dim = o.size("max_dim", g.max_dim);
  g.step = o.real("step", g.step);
  g.tolerance = o.real("tolerance", g.tolerance);
  g.seed = o.seed();
  const auto path = o.optional("out");
  o.reject_unknown();
  if (g.batch < 2 || g.max_dim < 2) throw UsageError("gradcheck needs batch >= 2 and max_dim >= 2");

  const auto r = run_gradcheck(g);
  const auto text =
      fmt::format("trials\t{}\ncoordinates\t{}\nmax_relative_error\t{}\ntolerance\t{}\n{}\n",
                  r.trials, r.coordinates, r.max_relative_error, g.tolerance,
                  r.passed ? "PASS" : "FAIL");
  if (path) {
    Manifest m("gradcheck", o);
    write_file_atomic(*path, text);
    m.output(*path);
    m.write(*path);
  }
  out << text;
  return r.passed ? kExitOk : kExitFailure;
}

using Command = std::function<int(Options&, std::ostream&)>;

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table{
      {"gen-corpus", cmd_gen_corpus},
      {"pretrain-teacher", cmd_pretrain_teacher},
      {"train-student", cmd_train_student},
      {"fuse", cmd_fuse},
      {"sweep-alpha", cmd_sweep_alpha},
      {"eval-retrieval", [](Options& o, std::ostream& out) { return cmd_eval(o, out, true); }},
      {"eval-classify", [](Options& o, std::ostream& out) { return cmd_eval(o, out, false); }},
      {"report-class-delta", cmd_report_class_delta},
      {"report-rank-dist", cmd_report_rank_dist},
      {"gradcheck", cmd_gradcheck},
  };
  return table;
}

}  // namespace

std::string cli_usage() {
  std::string s =
      "usage: dfuse <command> [--config FILE] [--key value ...]\n"
      "\n"
      "commands:\n";
  for (const auto& [name, fn] : commands()) s += "  " + name + "\n";
  s += "\nEvery config-file key can be overridden with --key value. "
       "Seeds come from --seed, then $DFUSE_SEED.\n";
  return s;
}

int cli_dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << cli_usage();
    return kExitUsage;
  }
  const std::string& name = args.front();
  if (name == "help" || name == "--help" || name == "-h") {
    out << cli_usage();
    return kExitOk;
  }
  const auto it = commands().find(name);
  if (it == commands().end()) {
    err << fmt::format("dfuse: unknown command '{}'\n\n{}", name, cli_usage());
    return kExitUsage;
  }
  try {
    auto cl = parse_command_line(args.subspan(1));
    if (!cl.positional.empty()) {
      throw UsageError(fmt::format("unexpected argument '{}'", cl.positional.front()));
    }
    KeyValueConfig merged;
    if (cl.flags.has("config")) {
      const fs::path cfg_path = cl.flags.get_string("config", "");
      try {
        merged = KeyValueConfig::load(cfg_path);
      } catch (const ParseError& e) {
        throw UsageError(fmt::format("config file '{}': {}", cfg_path.string(), e.what()));
      }
    }
    for (const auto& [k, v] : cl.flags.entries()) {
      if (k != "config") merged.set(k, v);
    }
    Options opts(std::move(merged));
    return it->second(opts, out);
  } catch (const UsageError& e) {
    err << fmt::format("dfuse {}: {}\n", name, e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    err << fmt::format("dfuse {}: error: {}\n", name, e.what());
    return kExitFailure;
  }
}

int cli_dispatch(std::span<const std::string> args) {
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace dfuse
