#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "numfmt.hpp"
#include "prune.hpp"
#include "quant.hpp"
#include "train.hpp"

namespace crft {

struct ResultRow {
  std::string task;
  std::string method;        // "fp" | "magnitude" | "wanda" | "baseptq"
  std::string finetune_opt;  // optimizer used to produce the checkpoint
  std::string config;        // e.g. "unstructured@0.5", "16:32", "W8A8/per_channel"
  double top1 = 0.0;         // percent
  double drop_from_fp = 0.0; // signed, negative means worse than FP
  std::uint64_t seed = 0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

struct PruneCell {
  PruneScoring scoring = PruneScoring::magnitude;
  MaskStructure structure;
  double sparsity = 0.5;

  std::string config_str() const {
    return structure.kind == MaskStructure::nm
               ? structure.str()
               : "unstructured@" + fmt_double(sparsity);
  }
};

struct QuantCell {
  int w_bits = 8;
  int a_bits = 16;
  WeightGranularity granularity = WeightGranularity::per_channel;

  std::string config_str() const {
    return "W" + std::to_string(w_bits) + "A" + std::to_string(a_bits) + "/" +
           std::string(granularity_name(granularity));
  }
};

struct SuiteConfig {
  bool include_fp = true;
  std::vector<PruneCell> prune;
  std::vector<QuantCell> quant;
  std::size_t calib_size = 128;
  ActRangeMode act_range_mode = ActRangeMode::minmax;
  double percentile = 99.9;
  std::size_t eval_limit = 2048;  // power of two keeps drop accounting exact
  std::size_t eval_batch = 64;
};

// Evaluates FP accuracy then every requested pruning and quantization cell on
// a frozen checkpoint. Deterministic: rows come out in declaration order.
inline ResultTable run_compression_suite(const ModelSpec& spec, const ParamSet& params,
                                         const Dataset& train, const Dataset& eval,
                                         const SuiteConfig& cfg, const std::string& task,
                                         const std::string& finetune_opt, std::uint64_t seed) {
  ResultTable table;
  const double fp_top1 =
      100.0 * accuracy(spec, params, eval, cfg.eval_batch, nullptr, cfg.eval_limit);
  if (cfg.include_fp) {
    table.rows.push_back({task, "fp", finetune_opt, "-", fp_top1, 0.0, seed});
  }

  const bool needs_calib =
      !cfg.quant.empty() ||
      std::any_of(cfg.prune.begin(), cfg.prune.end(),
                  [](const PruneCell& c) { return c.scoring == PruneScoring::wanda; });
  Dataset calib;
  WandaCalib wanda;
  if (needs_calib) {
    calib = calib_slice(train, seed, cfg.calib_size);
    wanda = wanda_calib_from_activations(collect_activations(spec, params, calib.images));
  }

  for (const PruneCell& cell : cfg.prune) {
    PruneOptions opt;
    opt.scoring = cell.scoring;
    opt.structure = cell.structure;
    opt.sparsity = cell.sparsity;
    const PruneMask mask =
        build_mask(params, opt, cell.scoring == PruneScoring::wanda ? &wanda : nullptr);
    const ParamSet pruned = apply_mask(params, mask);
    const double top1 =
        100.0 * accuracy(spec, pruned, eval, cfg.eval_batch, nullptr, cfg.eval_limit);
    table.rows.push_back({task, scoring_name(cell.scoring), finetune_opt, cell.config_str(),
                          top1, top1 - fp_top1, seed});
  }

  for (const QuantCell& cell : cfg.quant) {
    QuantConfig qc;
    qc.w_bits = cell.w_bits;
    qc.a_bits = cell.a_bits;
    qc.weight_granularity = cell.granularity;
    qc.act_range_mode = cfg.act_range_mode;
    qc.percentile = cfg.percentile;
    qc.calib_size = cfg.calib_size;
    ActRangeTable ranges;
    if (qc.quantize_activations()) {
      ranges = calibrate_activations(spec, params, calib.images, qc);
    }
    const QuantizedModel qm = ptq_apply(spec, params, qc, ranges);
    ForwardHooks hooks = qm.hooks();
    const double top1 = 100.0 * accuracy(qm.spec, qm.params, eval, cfg.eval_batch,
                                         qc.quantize_activations() ? &hooks : nullptr,
                                         cfg.eval_limit);
    table.rows.push_back({task, "baseptq", finetune_opt, cell.config_str(), top1,
                          top1 - fp_top1, seed});
  }
  return table;
}

// ---- report emission ---------------------------------------------------------

inline const char* kReportHeader = "task,method,finetune_opt,config,top1,drop_from_fp,seed";

inline std::string emit_csv(const ResultTable& t) {
  if (t.rows.empty()) throw ReportError("emit_csv: empty result table");
  std::string out = std::string(kReportHeader) + "\n";
  for (const ResultRow& r : t.rows) {
    out += r.task + "," + r.method + "," + r.finetune_opt + "," + r.config + "," +
           fmt_double(r.top1) + "," + fmt_double(r.drop_from_fp) + "," +
           std::to_string(r.seed) + "\n";
  }
  return out;
}

inline ResultTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw FormatError("parse_csv: missing or unexpected header row");
  }
  ResultTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (int i = 0; i < 6; ++i) {
      const std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) throw FormatError("parse_csv: short row: " + line);
      f.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    f.push_back(line.substr(pos));
    ResultRow r;
    r.task = f[0];
    r.method = f[1];
    r.finetune_opt = f[2];
    r.config = f[3];
    r.top1 = std::stod(f[4]);
    r.drop_from_fp = std::stod(f[5]);
    r.seed = std::stoull(f[6]);
    t.rows.push_back(std::move(r));
  }
  if (t.rows.empty()) throw ReportError("parse_csv: no data rows");
  return t;
}

// Markdown mirrors the quant-table shape: one row per (task, method,
// finetune_opt), one column per config showing "top1 (drop)".
inline std::string emit_markdown(const ResultTable& t) {
  if (t.rows.empty()) throw ReportError("emit_markdown: empty result table");
  std::vector<std::string> configs;
  for (const ResultRow& r : t.rows) {
    if (std::find(configs.begin(), configs.end(), r.config) == configs.end()) {
      configs.push_back(r.config);
    }
  }
  std::vector<std::string> keys;
  std::string out = "| task | method | finetune |";
  for (const std::string& c : configs) out += " " + c + " |";
  out += "\n|---|---|---|";
  for (std::size_t i = 0; i < configs.size(); ++i) out += "---|";
  out += "\n";
  for (const ResultRow& r : t.rows) {
    const std::string key = r.task + "\x1f" + r.method + "\x1f" + r.finetune_opt;
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) continue;
    keys.push_back(key);
    out += "| " + r.task + " | " + r.method + " | " + r.finetune_opt + " |";
    for (const std::string& c : configs) {
      std::string cellv = " |";
      for (const ResultRow& q : t.rows) {
        if (q.task == r.task && q.method == r.method && q.finetune_opt == r.finetune_opt &&
            q.config == c) {
          cellv = " " + fmt_double_fixed(q.top1, 2) + " (" + fmt_double_fixed(q.drop_from_fp, 2) +
                  ") |";
          break;
        }
      }
      out += cellv;
    }
    out += "\n";
  }
  return out;
}

inline std::string emit_json_report(const ResultTable& t) {
  if (t.rows.empty()) throw ReportError("emit_json: empty result table");
  std::string out = "[\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const ResultRow& r = t.rows[i];
    out += "  {\"task\": \"" + r.task + "\", \"method\": \"" + r.method +
           "\", \"finetune_opt\": \"" + r.finetune_opt + "\", \"config\": \"" + r.config +
           "\", \"top1\": " + fmt_double(r.top1) +
           ", \"drop_from_fp\": " + fmt_double(r.drop_from_fp) +
           ", \"seed\": " + std::to_string(r.seed) + "}";
    out += i + 1 < t.rows.size() ? ",\n" : "\n";
  }
  out += "]\n";
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline std::string emit_report(const ResultTable& t, const std::string& format) {
  if (format == "csv") return emit_csv(t);
  if (format == "markdown") return emit_markdown(t);
  if (format == "json") return emit_json_report(t);
  throw ConfigError("emit_report: unknown format " + format);
}

}  // namespace crft
