#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace debiascope::panel {

// Occupation vocabulary. Seven employment-status categories occupy
// fixed ids 0-6 so synthetic and ingested vocabularies line up across
// runs; remaining codes get dense ids in order of first appearance.
class Vocabulary {
 public:
  Vocabulary();

  static constexpr int kNumStatusTokens = 7;
  static const std::vector<std::string>& status_tokens();

  int add(const std::string& code);          // returns existing id if known
  int id_of(const std::string& code) const;  // -1 if unknown
  const std::string& label(int id) const;
  int size() const { return static_cast<int>(labels_.size()); }

  bool operator==(const Vocabulary& other) const { return labels_ == other.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

Vocabulary build_vocabulary(const std::vector<std::string>& raw_codes);

struct HistoryToken {
  std::int32_t occ = 0;   // vocabulary id
  std::int32_t year = 0;
  bool operator==(const HistoryToken&) const = default;
};

// Sequence covariate X: the career history fed to the encoder.
struct WorkerHistory {
  std::vector<HistoryToken> tokens;

  std::size_t length() const { return tokens.size(); }
  bool operator==(const WorkerHistory&) const = default;
};

struct Observation {
  std::string unit_id;
  WorkerHistory history;
  std::vector<double> z;   // static covariates, length P
  int group = 0;           // A in {0,1}
  double log_wage = 0.0;   // Y
  double weight = 1.0;     // longitudinal sample weight, > 0

  bool operator==(const Observation&) const = default;
};

struct Panel {
  std::vector<Observation> observations;
  Vocabulary vocabulary;
  std::vector<std::string> covariate_names;

  std::size_t size() const { return observations.size(); }
  std::size_t covariate_dim() const { return covariate_names.size(); }

  // Distinct unit ids in observation order.
  std::vector<std::string> unit_ids() const;
  std::size_t count_group(int a) const;
  void validate() const;  // invariants: weights, groups, covariate widths

  bool operator==(const Panel&) const = default;
};

struct FoldAssignment {
  std::unordered_map<std::string, int> fold_of;
  int k = 0;

  int fold(const std::string& unit) const;
};

// Unit-level K-fold split. A pure function of the unit-id set, K and
// seed: observation order never matters, and all observations of a
// unit share a fold.
FoldAssignment split_folds(const Panel& panel, int k, std::uint64_t seed);

// Keeps observations whose estimated propensity lies strictly inside
// (low, high). e_hat must cover every unit.
Panel clip_by_propensity(const Panel& panel,
                         const std::unordered_map<std::string, double>& e_hat,
                         double low, double high);

Panel subset(const Panel& panel, const std::vector<std::size_t>& indices);

enum class PanelFormat { kCsv, kJsonl };

PanelFormat format_from_path(const std::string& path);
Panel load_panel(const std::string& path, PanelFormat format);
Panel load_panel(const std::string& path);  // format from extension
void write_panel(const Panel& panel, const std::string& path, PanelFormat format);
void write_panel(const Panel& panel, const std::string& path);

}  // namespace debiascope::panel
