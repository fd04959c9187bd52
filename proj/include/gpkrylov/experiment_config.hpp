#ifndef GPKRYLOV_EXPERIMENT_CONFIG_HPP
#define GPKRYLOV_EXPERIMENT_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gpkrylov/common.hpp"
#include "gpkrylov/dataset.hpp"
#include "gpkrylov/kernels.hpp"
#include "gpkrylov/krylov.hpp"
#include "gpkrylov/optimizer.hpp"
#include "gpkrylov/preconditioners.hpp"

namespace gpkrylov {

// Config files are sectioned key-value text:
//
//   # comment
//   [section]
//   key = value
//   list = 1,2,3
//
// Keys and section names are case-sensitive; whitespace around keys and
// values is ignored. ExperimentConfig::serialize() emits this format and
// parse() reads it back, so configs round-trip.

class IniDoc {
 public:
  using Entry = std::pair<std::string, std::string>;
  struct Section {
    std::string name;
    std::vector<Entry> entries;
  };

  static IniDoc parse(const std::string& text) {
    IniDoc doc;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    Section* current = nullptr;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#' || trimmed[0] == ';') continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']')
          throw input_error("config line " + std::to_string(lineno) + ": unterminated section header");
        doc.sections_.push_back({trim(trimmed.substr(1, trimmed.size() - 2)), {}});
        current = &doc.sections_.back();
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw input_error("config line " + std::to_string(lineno) + ": expected 'key = value'");
      if (!current)
        throw input_error("config line " + std::to_string(lineno) + ": key outside any [section]");
      current->entries.emplace_back(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
    }
    return doc;
  }

  static IniDoc parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  bool has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
  }

  std::string get(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    if (!v) throw input_error("config: missing key '" + key + "' in section [" + section + "]");
    return *v;
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
  }

  double get_number(const std::string& section, const std::string& key, double fallback) const {
    const std::string* v = find(section, key);
    return v ? to_number(*v, section, key) : fallback;
  }

  std::vector<double> get_list(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(section, key));
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(to_number(trim(cell), section, key));
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& section,
                                           const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(section, key));
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    return out;
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw input_error("config: key '" + key + "' in [" + section + "] is not a boolean: " + *v);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }

  static double to_number(const std::string& s, const std::string& section,
                          const std::string& key) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw input_error("config: key '" + key + "' in [" + section + "] is not numeric: " + s);
    }
  }

  const std::string* find(const std::string& section, const std::string& key) const {
    for (const auto& s : sections_)
      if (s.name == section)
        for (const auto& [k, v] : s.entries)
          if (k == key) return &v;
    return nullptr;
  }

  std::vector<Section> sections_;
};

enum class ExperimentType { BiasVariance, QualityCurves, Training, ResidualDecay };

inline std::string experiment_type_name(ExperimentType t) {
  switch (t) {
    case ExperimentType::BiasVariance: return "bias_variance";
    case ExperimentType::QualityCurves: return "quality_curves";
    case ExperimentType::Training: return "training";
    case ExperimentType::ResidualDecay: return "residual_decay";
  }
  return "?";
}

struct DatasetConfig {
  bool synthetic = true;
  Index n = 256;
  int d = 1;
  std::uint64_t seed = 1;
  std::string csv_path;
  std::string target_column = "y";
  bool standardize = true;
  SplitFractions split;
};

struct PrecondExperimentConfig {
  std::vector<LowRankKind> kinds = {LowRankKind::PivotedCholesky};
  std::vector<int> ranks = {8, 16, 32, 64};
  int samples = 0;  // nystroem / randomized svd oversampling; 0 means 2 * rank
  NystroemSampling sampling = NystroemSampling::DiagonalWeighted;
  double diag_tol = 0.0;
};

struct ProbeExperimentConfig {
  std::vector<int> counts = {16};
  int repetitions = 1;
  std::uint64_t seed = 17;
};

struct ExperimentConfig {
  ExperimentType type = ExperimentType::BiasVariance;
  std::string output_dir = "out";
  DatasetConfig dataset;
  KernelSpec kernel;
  Hyperparameters params;  // synthetic ground truth / evaluation point
  PrecondExperimentConfig precond;
  ProbeExperimentConfig probes;
  CgConfig solver{200, 1e-6, false};
  OptOptions optimizer;
  int training_runs = 1;
  Index dense_limit = 4096;

  static ExperimentConfig parse(const IniDoc& doc);
  static ExperimentConfig parse_file(const std::string& path) {
    return parse(IniDoc::parse_file(path));
  }
  static ExperimentConfig parse_string(const std::string& text) {
    return parse(IniDoc::parse(text));
  }
  std::string serialize() const;
  void validate() const;
};

namespace detail {

inline KernelFamily family_from_name(const std::string& name) {
  for (KernelFamily f : {KernelFamily::RBF, KernelFamily::Matern12, KernelFamily::Matern32,
                         KernelFamily::Matern52, KernelFamily::RationalQuadratic})
    if (family_name(f) == name) return f;
  throw input_error("config: unknown kernel family '" + name + "'");
}

inline LowRankKind kind_from_name(const std::string& name) {
  for (LowRankKind k : {LowRankKind::PivotedCholesky, LowRankKind::TruncatedSVD,
                        LowRankKind::RandomizedSVD, LowRankKind::Nystroem, LowRankKind::RFF,
                        LowRankKind::QFF})
    if (kind_name(k) == name) return k;
  throw input_error("config: unknown preconditioner kind '" + name + "'");
}

inline ExperimentType type_from_name(const std::string& name) {
  for (ExperimentType t : {ExperimentType::BiasVariance, ExperimentType::QualityCurves,
                           ExperimentType::Training, ExperimentType::ResidualDecay})
    if (experiment_type_name(t) == name) return t;
  throw input_error("config: unknown experiment type '" + name + "'");
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse(const IniDoc& doc) {
  ExperimentConfig cfg;
  cfg.type = detail::type_from_name(doc.get("experiment", "type"));
  cfg.output_dir = doc.get_or("experiment", "output_dir", cfg.output_dir);
  cfg.dense_limit = static_cast<Index>(doc.get_number("experiment", "dense_limit", 4096));

  const std::string kind = doc.get_or("dataset", "kind", "synthetic");
  if (kind == "synthetic") {
    cfg.dataset.synthetic = true;
    cfg.dataset.n = static_cast<Index>(doc.get_number("dataset", "n", 256));
    cfg.dataset.d = static_cast<int>(doc.get_number("dataset", "d", 1));
  } else if (kind == "csv") {
    cfg.dataset.synthetic = false;
    cfg.dataset.csv_path = doc.get("dataset", "path");
    cfg.dataset.target_column = doc.get_or("dataset", "target", "y");
    cfg.dataset.standardize = doc.get_bool("dataset", "standardize", true);
  } else {
    throw input_error("config: dataset kind must be 'synthetic' or 'csv'");
  }
  cfg.dataset.seed = static_cast<std::uint64_t>(doc.get_number("dataset", "seed", 1));
  if (doc.has("dataset", "split")) {
    const auto fr = doc.get_list("dataset", "split");
    require(fr.size() == 3, "config: dataset split needs three fractions");
    cfg.dataset.split = SplitFractions{fr[0], fr[1], fr[2]};
  }

  cfg.kernel.family = detail::family_from_name(doc.get_or("kernel", "family", "rbf"));
  cfg.kernel.ard = doc.get_bool("kernel", "ard", true);
  cfg.kernel.ratquad_alpha = doc.get_number("kernel", "ratquad_alpha", 1.0);
  const double outputscale = doc.get_number("kernel", "outputscale", 1.0);
  const double noise = doc.get_number("kernel", "noise", 1e-2);
  std::vector<double> ls;
  if (doc.has("kernel", "lengthscales"))
    ls = doc.get_list("kernel", "lengthscales");
  else
    ls = {doc.get_number("kernel", "lengthscale", 1.0)};
  const int d = cfg.dataset.synthetic ? cfg.dataset.d : static_cast<int>(ls.size());
  cfg.params.log_outputscale = std::log(outputscale);
  cfg.params.log_noise = std::log(noise);
  cfg.params.log_lengthscales.resize(d);
  for (int j = 0; j < d; ++j)
    cfg.params.log_lengthscales[j] =
        std::log(ls.size() == 1 ? ls[0] : ls.at(static_cast<std::size_t>(j)));

  if (doc.has("preconditioner", "kind")) {
    cfg.precond.kinds.clear();
    for (const auto& name : doc.get_string_list("preconditioner", "kind"))
      cfg.precond.kinds.push_back(detail::kind_from_name(name));
  }
  if (doc.has("preconditioner", "ranks")) {
    cfg.precond.ranks.clear();
    for (double r : doc.get_list("preconditioner", "ranks"))
      cfg.precond.ranks.push_back(static_cast<int>(r));
  }
  cfg.precond.samples = static_cast<int>(doc.get_number("preconditioner", "samples", 0));
  cfg.precond.diag_tol = doc.get_number("preconditioner", "diag_tol", 0.0);
  if (doc.get_or("preconditioner", "sampling", "diagonal") == "uniform")
    cfg.precond.sampling = NystroemSampling::Uniform;

  if (doc.has("probes", "counts")) {
    cfg.probes.counts.clear();
    for (double c : doc.get_list("probes", "counts"))
      cfg.probes.counts.push_back(static_cast<int>(c));
  }
  cfg.probes.repetitions = static_cast<int>(doc.get_number("probes", "repetitions", 1));
  cfg.probes.seed = static_cast<std::uint64_t>(doc.get_number("probes", "seed", 17));

  cfg.solver.max_iters = static_cast<int>(doc.get_number("solver", "max_iters", 200));
  cfg.solver.rel_tol = doc.get_number("solver", "rel_tol", 1e-6);

  cfg.optimizer.method =
      doc.get_or("optimizer", "method", "lbfgs") == "adam" ? OptMethod::Adam : OptMethod::LBFGS;
  cfg.optimizer.max_steps = static_cast<int>(doc.get_number("optimizer", "max_steps", 20));
  cfg.optimizer.lbfgs_memory = static_cast<int>(doc.get_number("optimizer", "memory", 10));
  cfg.optimizer.armijo_c1 = doc.get_number("optimizer", "armijo_c1", 1e-4);
  cfg.optimizer.wolfe_c2 = doc.get_number("optimizer", "wolfe_c2", 0.9);
  cfg.optimizer.adam_lr = doc.get_number("optimizer", "adam_lr", 0.1);
  cfg.optimizer.early_stop_patience = static_cast<int>(doc.get_number("optimizer", "patience", 3));
  cfg.optimizer.validation_fraction =
      doc.get_number("optimizer", "validation_fraction", cfg.dataset.split.validation);
  cfg.training_runs = static_cast<int>(doc.get_number("optimizer", "runs", 1));

  cfg.validate();
  return cfg;
}

inline std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "type = " << experiment_type_name(type) << "\n";
  out << "output_dir = " << output_dir << "\n";
  out << "dense_limit = " << dense_limit << "\n\n";

  out << "[dataset]\n";
  if (dataset.synthetic) {
    out << "kind = synthetic\n";
    out << "n = " << dataset.n << "\n";
    out << "d = " << dataset.d << "\n";
  } else {
    out << "kind = csv\n";
    out << "path = " << dataset.csv_path << "\n";
    out << "target = " << dataset.target_column << "\n";
    out << "standardize = " << (dataset.standardize ? "true" : "false") << "\n";
  }
  out << "seed = " << dataset.seed << "\n";
  out << "split = " << CsvWriter::format(dataset.split.train) << ","
      << CsvWriter::format(dataset.split.validation) << ","
      << CsvWriter::format(dataset.split.test) << "\n\n";

  out << "[kernel]\n";
  out << "family = " << family_name(kernel.family) << "\n";
  out << "ard = " << (kernel.ard ? "true" : "false") << "\n";
  out << "ratquad_alpha = " << CsvWriter::format(kernel.ratquad_alpha) << "\n";
  out << "outputscale = " << CsvWriter::format(params.outputscale()) << "\n";
  out << "lengthscales = ";
  for (int j = 0; j < params.dim(); ++j)
    out << CsvWriter::format(std::exp(params.log_lengthscales[j]))
        << (j + 1 < params.dim() ? "," : "");
  out << "\n";
  out << "noise = " << CsvWriter::format(params.noise_variance()) << "\n\n";

  out << "[preconditioner]\n";
  out << "kind = ";
  for (std::size_t i = 0; i < precond.kinds.size(); ++i)
    out << kind_name(precond.kinds[i]) << (i + 1 < precond.kinds.size() ? "," : "");
  out << "\n";
  out << "ranks = ";
  for (std::size_t i = 0; i < precond.ranks.size(); ++i)
    out << precond.ranks[i] << (i + 1 < precond.ranks.size() ? "," : "");
  out << "\n";
  out << "samples = " << precond.samples << "\n";
  out << "sampling = " << (precond.sampling == NystroemSampling::Uniform ? "uniform" : "diagonal")
      << "\n";
  out << "diag_tol = " << CsvWriter::format(precond.diag_tol) << "\n\n";

  out << "[probes]\n";
  out << "counts = ";
  for (std::size_t i = 0; i < probes.counts.size(); ++i)
    out << probes.counts[i] << (i + 1 < probes.counts.size() ? "," : "");
  out << "\n";
  out << "repetitions = " << probes.repetitions << "\n";
  out << "seed = " << probes.seed << "\n\n";

  out << "[solver]\n";
  out << "max_iters = " << solver.max_iters << "\n";
  out << "rel_tol = " << CsvWriter::format(solver.rel_tol) << "\n\n";

  out << "[optimizer]\n";
  out << "method = " << (optimizer.method == OptMethod::Adam ? "adam" : "lbfgs") << "\n";
  out << "max_steps = " << optimizer.max_steps << "\n";
  out << "memory = " << optimizer.lbfgs_memory << "\n";
  out << "armijo_c1 = " << CsvWriter::format(optimizer.armijo_c1) << "\n";
  out << "wolfe_c2 = " << CsvWriter::format(optimizer.wolfe_c2) << "\n";
  out << "adam_lr = " << CsvWriter::format(optimizer.adam_lr) << "\n";
  out << "patience = " << optimizer.early_stop_patience << "\n";
  out << "validation_fraction = " << CsvWriter::format(optimizer.validation_fraction) << "\n";
  out << "runs = " << training_runs << "\n";
  return out.str();
}

inline void ExperimentConfig::validate() const {
  require(probes.repetitions >= 1, "config: probes repetitions must be >= 1");
  require(!probes.counts.empty(), "config: probes counts must not be empty");
  require(!precond.ranks.empty(), "config: preconditioner ranks must not be empty");
  require(training_runs >= 1, "config: optimizer runs must be >= 1");
  if (!dataset.synthetic)
    require(std::filesystem::exists(dataset.csv_path),
            "config: dataset path does not exist: " + dataset.csv_path);
  solver.validate();
  optimizer.validate();
  params.validate();
}

}  // namespace gpkrylov

#endif
