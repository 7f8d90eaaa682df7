#include "dfuse/report_io.hpp"

#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dfuse/errors.hpp"

namespace dfuse {

namespace {

using nlohmann::json;

std::string recall_name(std::size_t k) { return fmt::format("R@{}", k); }

void append_metric(std::string& out, std::string_view name, double value) {
  out += fmt::format("{}\t{}\n", name, value);
}

json metric_record(std::string_view name, double value) {
  return {{"record", "metric"}, {"name", name}, {"value", value}};
}

}  // namespace

std::string report_to_tsv(const EvalReport& report) {
  std::string out = "metric\tvalue\n";
  if (report.classification) {
    const auto& c = *report.classification;
    append_metric(out, "top1", c.top1);
    append_metric(out, "top5", c.top5);
  }
  if (report.retrieval) {
    const auto& r = *report.retrieval;
    for (const auto& [k, v] : r.recall_at) append_metric(out, recall_name(k), v);
    out += fmt::format("MdR\t{}\n", r.median_rank);
    out += fmt::format("queries\t{}\n", r.ranks.ranks.size());
    out += fmt::format("gallery_size\t{}\n", r.ranks.gallery_size);
  }
  if (report.classification) {
    for (const auto& s : report.classification->per_class) {
      out += fmt::format("class:{}\t{}\n", s.name, s.accuracy());
    }
  }
  return out;
}

std::string report_to_jsonl(const EvalReport& report) {
  std::string out;
  auto emit = [&out](const json& j) {
    out += j.dump();
    out += '\n';
  };
  if (report.classification) {
    const auto& c = *report.classification;
    emit(metric_record("top1", c.top1));
    emit(metric_record("top5", c.top5));
    for (std::size_t i = 0; i < c.per_class.size(); ++i) {
      const auto& s = c.per_class[i];
      emit({{"record", "class"}, {"index", i}, {"name", s.name}, {"correct", s.correct},
            {"count", s.count}, {"accuracy", s.accuracy()}});
    }
  }
  if (report.retrieval) {
    const auto& r = *report.retrieval;
    for (const auto& [k, v] : r.recall_at) emit(metric_record(recall_name(k), v));
    emit({{"record", "metric"}, {"name", "MdR"}, {"value", r.median_rank}});
    emit({{"record", "gallery"}, {"size", r.ranks.gallery_size}});
    for (std::size_t q = 0; q < r.ranks.ranks.size(); ++q) {
      emit({{"record", "rank"}, {"query", q}, {"rank", r.ranks.ranks[q]}});
    }
  }
  return out;
}

EvalReport report_from_jsonl(std::string_view text) {
  EvalReport report;
  auto classification = [&]() -> ClassificationResult& {
    if (!report.classification) report.classification.emplace();
    return *report.classification;
  };
  auto retrieval = [&]() -> RetrievalResult& {
    if (!report.retrieval) report.retrieval.emplace();
    return *report.retrieval;
  };
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string kind = j.at("record").get<std::string>();
      if (kind == "metric") {
        const std::string name = j.at("name").get<std::string>();
        if (name == "top1") {
          classification().top1 = j.at("value").get<double>();
        } else if (name == "top5") {
          classification().top5 = j.at("value").get<double>();
        } else if (name == "MdR") {
          retrieval().median_rank = j.at("value").get<std::size_t>();
        } else if (name.starts_with("R@")) {
          retrieval().recall_at[std::stoul(name.substr(2))] = j.at("value").get<double>();
        } else {
          throw ParseError(line_no, fmt::format("unknown metric '{}'", name));
        }
      } else if (kind == "class") {
        auto& per_class = classification().per_class;
        const auto index = j.at("index").get<std::size_t>();
        if (index != per_class.size()) throw ParseError(line_no, "class records out of order");
        per_class.push_back({j.at("name").get<std::string>(), j.at("correct").get<std::size_t>(),
                             j.at("count").get<std::size_t>()});
      } else if (kind == "gallery") {
        retrieval().ranks.gallery_size = j.at("size").get<std::size_t>();
      } else if (kind == "rank") {
        auto& ranks = retrieval().ranks.ranks;
        if (j.at("query").get<std::size_t>() != ranks.size()) {
          throw ParseError(line_no, "rank records out of order");
        }
        ranks.push_back(j.at("rank").get<std::size_t>());
      } else {
        throw ParseError(line_no, fmt::format("unknown record kind '{}'", kind));
      }
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  report.check_invariants();
  return report;
}

std::string sweep_to_tsv(std::span<const SweepRow> rows) {
  std::string out = "alpha";
  const bool cls = !rows.empty() && rows.front().report.classification.has_value();
  const bool ret = !rows.empty() && rows.front().report.retrieval.has_value();
  if (cls) out += "\ttop1\ttop5";
  if (ret) {
    for (std::size_t k : kRecallCutoffs) out += "\t" + recall_name(k);
    out += "\tMdR";
  }
  out += '\n';
  for (const auto& row : rows) {
    out += fmt::format("{}", row.alpha);
    if (cls) {
      out += fmt::format("\t{}\t{}", row.report.classification->top1,
                         row.report.classification->top5);
    }
    if (ret) {
      for (std::size_t k : kRecallCutoffs) {
        out += fmt::format("\t{}", row.report.retrieval->recall_at.at(k));
      }
      out += fmt::format("\t{}", row.report.retrieval->median_rank);
    }
    out += '\n';
  }
  return out;
}

std::string sweep_to_jsonl(std::span<const SweepRow> rows) {
  std::string out;
  for (const auto& row : rows) {
    json j{{"alpha", row.alpha}};
    if (row.report.classification) {
      j["top1"] = row.report.classification->top1;
      j["top5"] = row.report.classification->top5;
    }
    if (row.report.retrieval) {
      for (const auto& [k, v] : row.report.retrieval->recall_at) j[recall_name(k)] = v;
      j["MdR"] = row.report.retrieval->median_rank;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string class_delta_to_tsv(std::span<const ClassDelta> deltas) {
  std::string out = "class\tdelta_top1\tcount\n";
  for (const auto& d : deltas) out += fmt::format("{}\t{}\t{}\n", d.name, d.delta, d.count);
  return out;
}

std::string rank_distribution_to_tsv(std::span<const RankDistRow> rows) {
  std::string out = "position\trank_a\trank_b\n";
  for (const auto& r : rows) out += fmt::format("{}\t{}\t{}\n", r.position, r.rank_a, r.rank_b);
  return out;
}

}  // namespace dfuse
