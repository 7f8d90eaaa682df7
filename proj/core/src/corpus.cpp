#include "dfuse/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dfuse/errors.hpp"
#include "dfuse/fileio.hpp"
#include "dfuse/rng.hpp"

namespace dfuse {

namespace {

using nlohmann::json;

constexpr std::array<std::pair<Split, std::string_view>, 7> kSplitNames{{
    {Split::kLabeledTrain, "labeled-train"},
    {Split::kLabeledVal, "labeled-val"},
    {Split::kUnlabeled, "unlabeled"},
    {Split::kEval, "eval"},
    {Split::kImageTrain, "image-train"},
    {Split::kImageEval, "image-eval"},
    {Split::kClass, "class"},
}};

constexpr std::string_view kFormatTag = "dfuse-corpus";
constexpr int kFormatVersion = 1;

bool is_paired(Split s) {
  return s == Split::kLabeledTrain || s == Split::kLabeledVal || s == Split::kEval ||
         s == Split::kImageTrain || s == Split::kImageEval;
}

std::size_t declared_pairs(const SynthConfig& c, Split s) {
  switch (s) {
    case Split::kLabeledTrain: return c.n_labeled_train;
    case Split::kLabeledVal: return c.n_labeled_val;
    case Split::kUnlabeled: return c.n_unlabeled;
    case Split::kEval: return c.n_eval;
    case Split::kImageTrain: return c.n_image_train;
    case Split::kImageEval: return c.n_image_eval;
    case Split::kClass: return c.n_concepts;
  }
  return 0;
}

// Expected record count: two per pair (or per unlabeled index), one per class.
std::size_t declared_records(const SynthConfig& c, Split s) {
  return s == Split::kClass ? c.n_concepts : 2 * declared_pairs(c, s);
}

std::string class_label(std::size_t k) { return fmt::format("class_{:03}", k); }

struct World {
  Matrix concepts;  // n_concepts x latent_dim, unit rows
  Matrix a_v;       // d_v x latent_dim
  Matrix a_t;       // d_t x latent_dim
};

World make_world(const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "world"));
  World w{Matrix(cfg.n_concepts, cfg.latent_dim), Matrix(cfg.d_v, cfg.latent_dim),
          Matrix(cfg.d_t, cfg.latent_dim)};
  for (double& x : w.concepts.data()) x = rng.normal();
  w.concepts = l2_normalize_rows(w.concepts);
  if (cfg.identity_maps) {
    w.a_v = Matrix::identity(cfg.latent_dim);
    w.a_t = Matrix::identity(cfg.latent_dim);
  } else {
    for (double& x : w.a_v.data()) x = rng.normal();
    for (double& x : w.a_t.data()) x = rng.normal();
  }
  return w;
}

std::vector<double> project(const Matrix& a, std::span<const double> c) {
  std::vector<double> out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = dot(a.row(r), c);
  return out;
}

Matrix observe(const std::vector<double>& clean, std::size_t rows, double noise, Rng& rng) {
  Matrix m(rows, clean.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < clean.size(); ++c) m(r, c) = clean[c] + noise * rng.normal();
  return m;
}

void emit_paired(const SynthConfig& cfg, const World& w, Split split, std::size_t frames,
                 std::vector<CorpusRecord>& out) {
  const std::size_t n = declared_pairs(cfg, split);
  Rng rng(derive_seed(cfg.seed, split_name(split)));
  std::vector<std::size_t> block(cfg.n_concepts);
  for (std::size_t i = 0; i < n; ++i) {
    if (i % cfg.n_concepts == 0) {
      std::iota(block.begin(), block.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(block));
    }
    const std::size_t k = block[i % cfg.n_concepts];
    const auto c = w.concepts.row(k);
    const std::string stem = fmt::format("{}-{:06}", split_name(split), i);
    out.push_back({stem + "-v", RecordKind::kVideo, split, static_cast<long>(k), i,
                   observe(project(w.a_v, c), frames, cfg.noise_sigma, rng), class_label(k)});
    out.push_back({stem + "-t", RecordKind::kText, split, static_cast<long>(k), i,
                   observe(project(w.a_t, c), 1, cfg.noise_sigma, rng), class_label(k)});
  }
}

void emit_unlabeled(const SynthConfig& cfg, const World& w, std::vector<CorpusRecord>& out) {
  Rng rng(derive_seed(cfg.seed, split_name(Split::kUnlabeled)));
  for (std::size_t i = 0; i < cfg.n_unlabeled; ++i) {
    const std::string stem = fmt::format("unlabeled-{:06}", i);
    const std::size_t kv = static_cast<std::size_t>(rng.below(cfg.n_concepts));
    out.push_back({stem + "-v", RecordKind::kVideo, Split::kUnlabeled, static_cast<long>(kv),
                   std::nullopt,
                   observe(project(w.a_v, w.concepts.row(kv)), cfg.frames_per_video,
                           cfg.noise_sigma, rng),
                   std::nullopt});
    const std::size_t kt = static_cast<std::size_t>(rng.below(cfg.n_concepts));
    out.push_back({stem + "-t", RecordKind::kText, Split::kUnlabeled, static_cast<long>(kt),
                   std::nullopt,
                   observe(project(w.a_t, w.concepts.row(kt)), 1, cfg.noise_sigma, rng),
                   std::nullopt});
  }
}

json synth_to_json(const SynthConfig& c) {
  return {{"n_concepts", c.n_concepts},     {"latent_dim", c.latent_dim},
          {"d_v", c.d_v},                   {"d_t", c.d_t},
          {"frames_per_video", c.frames_per_video}, {"noise_sigma", c.noise_sigma},
          {"n_labeled_train", c.n_labeled_train},   {"n_labeled_val", c.n_labeled_val},
          {"n_unlabeled", c.n_unlabeled},   {"n_eval", c.n_eval},
          {"n_image_train", c.n_image_train}, {"n_image_eval", c.n_image_eval},
          {"identity_maps", c.identity_maps}, {"seed", c.seed}};
}

SynthConfig synth_from_json(const json& j) {
  SynthConfig c;
  j.at("n_concepts").get_to(c.n_concepts);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("d_v").get_to(c.d_v);
  j.at("d_t").get_to(c.d_t);
  j.at("frames_per_video").get_to(c.frames_per_video);
  j.at("noise_sigma").get_to(c.noise_sigma);
  j.at("n_labeled_train").get_to(c.n_labeled_train);
  j.at("n_labeled_val").get_to(c.n_labeled_val);
  j.at("n_unlabeled").get_to(c.n_unlabeled);
  j.at("n_eval").get_to(c.n_eval);
  j.at("n_image_train").get_to(c.n_image_train);
  j.at("n_image_eval").get_to(c.n_image_eval);
  j.at("identity_maps").get_to(c.identity_maps);
  j.at("seed").get_to(c.seed);
  return c;
}

json record_to_json(const CorpusRecord& r) {
  json j{{"id", r.id},
         {"kind", r.kind == RecordKind::kVideo ? "video" : "text"},
         {"split", split_name(r.split)},
         {"concept_id", r.concept_id}};
  if (r.pair) j["pair"] = *r.pair;
  if (r.class_name) j["class_name"] = *r.class_name;
  if (r.kind == RecordKind::kVideo) {
    json frames = json::array();
    for (std::size_t f = 0; f < r.features.rows(); ++f) {
      const auto row = r.features.row(f);
      frames.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["features"] = std::move(frames);
  } else {
    const auto row = r.features.data();
    j["features"] = std::vector<double>(row.begin(), row.end());
  }
  return j;
}

std::vector<double> numeric_row(const json& j, const std::string& id) {
  if (!j.is_array()) throw ValidationError(id, "features must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError(id, "non-numeric feature value");
    const double v = x.get<double>();
    if (!std::isfinite(v)) throw ValidationError(id, "non-finite feature value");
    out.push_back(v);
  }
  return out;
}

CorpusRecord record_from_json(const json& j, const SynthConfig& meta) {
  CorpusRecord r;
  r.id = j.at("id").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "video") {
    r.kind = RecordKind::kVideo;
  } else if (kind == "text") {
    r.kind = RecordKind::kText;
  } else {
    throw ValidationError(r.id, fmt::format("unknown kind '{}'", kind));
  }
  try {
    r.split = parse_split(j.at("split").get<std::string>());
  } catch (const UsageError& e) {
    throw ValidationError(r.id, e.what());
  }
  r.concept_id = j.at("concept_id").get<long>();
  if (r.concept_id < 0) throw ValidationError(r.id, "concept_id must be >= 0");
  if (static_cast<std::size_t>(r.concept_id) >= meta.n_concepts) {
    throw ValidationError(r.id, fmt::format("concept_id {} >= n_concepts {}", r.concept_id,
                                            meta.n_concepts));
  }
  if (j.contains("pair")) r.pair = j.at("pair").get<std::size_t>();
  if (j.contains("class_name")) r.class_name = j.at("class_name").get<std::string>();

  const json& f = j.at("features");
  if (r.kind == RecordKind::kVideo) {
    if (!f.is_array() || f.empty()) throw ValidationError(r.id, "video needs at least one frame");
    std::vector<std::vector<double>> rows;
    for (const auto& row : f) rows.push_back(numeric_row(row, r.id));
    for (const auto& row : rows) {
      if (row.size() != meta.d_v) {
        throw ValidationError(r.id, fmt::format("frame dim {} != d_v {}", row.size(), meta.d_v));
      }
    }
    r.features = Matrix::from_rows(std::span<const std::vector<double>>(rows));
  } else {
    auto row = numeric_row(f, r.id);
    if (row.size() != meta.d_t) {
      throw ValidationError(r.id, fmt::format("text dim {} != d_t {}", row.size(), meta.d_t));
    }
    const std::size_t d = row.size();
    r.features = Matrix(1, d, std::move(row));
  }
  return r;
}

// Records of a paired split indexed by pair: (video, text).
std::vector<std::pair<const CorpusRecord*, const CorpusRecord*>> paired_records(
    const std::vector<CorpusRecord>& records, Split split) {
  std::map<std::size_t, std::pair<const CorpusRecord*, const CorpusRecord*>> by_pair;
  for (const auto& r : records) {
    if (r.split != split) continue;
    if (!r.pair) throw ValidationError(r.id, "record in a paired split has no pair index");
    auto& slot = by_pair[*r.pair];
    auto& dst = r.kind == RecordKind::kVideo ? slot.first : slot.second;
    if (dst != nullptr) throw ValidationError(r.id, fmt::format("pair {} duplicated", *r.pair));
    dst = &r;
  }
  std::vector<std::pair<const CorpusRecord*, const CorpusRecord*>> out;
  for (const auto& [idx, slot] : by_pair) {
    const auto* any = slot.first ? slot.first : slot.second;
    if (!slot.first || !slot.second) {
      throw ValidationError(any->id, fmt::format("pair {} is missing its {}", idx,
                                                 slot.first ? "text" : "video"));
    }
    if (slot.first->concept_id != slot.second->concept_id) {
      throw ValidationError(slot.first->id,
                            fmt::format("pair {} mixes concepts {} and {}", idx,
                                        slot.first->concept_id, slot.second->concept_id));
    }
    out.push_back(slot);
  }
  return out;
}

TextFeatures text_of(const CorpusRecord& r) {
  return {r.features.data().begin(), r.features.data().end()};
}

}  // namespace

std::string_view split_name(Split split) {
  for (const auto& [s, n] : kSplitNames)
    if (s == split) return n;
  return "unknown";
}

Split parse_split(std::string_view name) {
  for (const auto& [s, n] : kSplitNames)
    if (n == name) return s;
  throw UsageError(fmt::format("unknown split '{}'", name));
}

void SynthConfig::validate() const {
  if (n_concepts < 2) throw UsageError("n_concepts must be >= 2");
  if (latent_dim < 1 || d_v < 1 || d_t < 1) throw UsageError("synth dims must be >= 1");
  if (frames_per_video < 1) throw UsageError("frames_per_video must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw UsageError("noise_sigma must be finite and >= 0");
  }
  if (identity_maps && (d_v != latent_dim || d_t != latent_dim)) {
    throw UsageError("identity_maps requires d_v == d_t == latent_dim");
  }
}

Corpus::Corpus(SynthConfig meta, std::vector<CorpusRecord> records)
    : meta_(std::move(meta)), records_(std::move(records)) {}

std::size_t Corpus::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(),
                                                [split](const auto& r) { return r.split == split; }));
}

PairSet Corpus::pairs(Split split) const {
  if (!is_paired(split)) {
    throw UsageError(fmt::format("split '{}' has no stored pairs", split_name(split)));
  }
  PairSet out;
  for (const auto& [v, t] : paired_records(records_, split)) {
    out.videos.push_back({v->features});
    out.texts.push_back(text_of(*t));
    out.concepts.push_back(static_cast<int>(v->concept_id));
  }
  return out;
}

UnpairedSet Corpus::unpaired(Split split) const {
  UnpairedSet out;
  for (const auto& r : records_) {
    if (r.split != split) continue;
    if (r.kind == RecordKind::kVideo) {
      out.videos.push_back({r.features});
    } else {
      out.texts.push_back(text_of(r));
    }
  }
  return out;
}

PromptSet Corpus::prompts(std::vector<std::string> templates) const {
  std::vector<const CorpusRecord*> classes(meta_.n_concepts, nullptr);
  for (const auto& r : records_) {
    if (r.split != Split::kClass) continue;
    auto& slot = classes.at(static_cast<std::size_t>(r.concept_id));
    if (slot != nullptr) throw ValidationError(r.id, "duplicate class record");
    slot = &r;
  }
  PromptSet p;
  p.templates = std::move(templates);
  p.jitter_scale = meta_.noise_sigma;
  p.class_prototypes = Matrix(meta_.n_concepts, meta_.d_t);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (classes[k] == nullptr) throw UsageError(fmt::format("corpus has no class record for concept {}", k));
    p.class_names.push_back(classes[k]->class_name.value_or(class_label(k)));
    const auto f = classes[k]->features.data();
    std::copy(f.begin(), f.end(), p.class_prototypes.row(k).begin());
  }
  p.validate();
  return p;
}

EvalBundle Corpus::eval_bundle(Split split, const EncoderConfig& enc,
                               std::vector<std::string> templates,
                               std::size_t gallery_block) const {
  EvalBundle b;
  b.enc = enc;
  b.prompts = prompts(std::move(templates));
  auto p = pairs(split);
  b.videos = std::move(p.videos);
  b.texts = std::move(p.texts);
  for (int c : p.concepts) b.labels.push_back(static_cast<std::size_t>(c));
  b.gallery_block = gallery_block == 0 ? std::min(meta_.n_concepts, b.videos.size()) : gallery_block;
  return b;
}

Corpus gen_corpus(const SynthConfig& cfg) {
  cfg.validate();
  const World w = make_world(cfg);
  std::vector<CorpusRecord> records;
  for (std::size_t k = 0; k < cfg.n_concepts; ++k) {
    records.push_back({fmt::format("class-{:03}", k), RecordKind::kText, Split::kClass,
                       static_cast<long>(k), std::nullopt,
                       Matrix(1, cfg.d_t, project(w.a_t, w.concepts.row(k))), class_label(k)});
  }
  emit_paired(cfg, w, Split::kLabeledTrain, cfg.frames_per_video, records);
  emit_paired(cfg, w, Split::kLabeledVal, cfg.frames_per_video, records);
  emit_unlabeled(cfg, w, records);
  emit_paired(cfg, w, Split::kEval, cfg.frames_per_video, records);
  emit_paired(cfg, w, Split::kImageTrain, 1, records);
  emit_paired(cfg, w, Split::kImageEval, 1, records);
  return Corpus(cfg, std::move(records));
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  json meta{{"record", "meta"}, {"format", kFormatTag}, {"version", kFormatVersion},
            {"synth", synth_to_json(corpus.meta())}};
  out += meta.dump();
  out += '\n';
  for (const auto& r : corpus.records()) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

Corpus parse_corpus(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::optional<SynthConfig> meta;
  std::vector<CorpusRecord> records;
  std::map<std::string, std::size_t> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(line_no, fmt::format("malformed JSON: {}", e.what()));
    }
    try {
      if (!meta) {
        if (j.value("record", "") != "meta" || j.value("format", "") != kFormatTag) {
          throw ParseError(line_no, "first line must be the corpus meta record");
        }
        if (j.at("version").get<int>() != kFormatVersion) {
          throw ParseError(line_no, "unsupported corpus format version");
        }
        meta = synth_from_json(j.at("synth"));
        meta->validate();
        continue;
      }
      auto r = record_from_json(j, *meta);
      if (!seen_ids.emplace(r.id, line_no).second) throw ValidationError(r.id, "duplicate id");
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(line_no, fmt::format("bad record: {}", e.what()));
    } catch (const UsageError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!meta) throw ParseError(line_no + 1, "empty corpus file");

  Corpus corpus(*meta, std::move(records));
  for (const auto& [split, name] : kSplitNames) {
    const std::size_t have = corpus.count(split);
    const std::size_t want = declared_records(*meta, split);
    if (have != want) {
      throw ParseError(line_no + 1,
                       fmt::format("split '{}' has {} records but the meta line declares {} "
                                   "(truncated file?)",
                                   name, have, want));
    }
    if (is_paired(split)) paired_records(corpus.records(), split);
  }
  return corpus;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  write_file_atomic(path, serialize_corpus(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

}  // namespace dfuse
