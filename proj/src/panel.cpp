#include "debiascope/panel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "debiascope/rng.hpp"

namespace debiascope::panel {

const std::vector<std::string>& Vocabulary::status_tokens() {
  static const std::vector<std::string> tokens = {
      "employed", "laid-off", "unemployed", "disabled", "retired", "homemaker", "student"};
  return tokens;
}

Vocabulary::Vocabulary() {
  for (const std::string& s : status_tokens()) {
    index_[s] = static_cast<int>(labels_.size());
    labels_.push_back(s);
  }
}

int Vocabulary::add(const std::string& code) {
  auto it = index_.find(code);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(labels_.size());
  index_[code] = id;
  labels_.push_back(code);
  return id;
}

int Vocabulary::id_of(const std::string& code) const {
  auto it = index_.find(code);
  return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::label(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary id " + std::to_string(id));
  return labels_[static_cast<std::size_t>(id)];
}

Vocabulary build_vocabulary(const std::vector<std::string>& raw_codes) {
  Vocabulary v;
  for (const std::string& c : raw_codes) v.add(c);
  return v;
}

std::vector<std::string> Panel::unit_ids() const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const Observation& o : observations)
    if (seen.insert(o.unit_id).second) ids.push_back(o.unit_id);
  return ids;
}

std::size_t Panel::count_group(int a) const {
  std::size_t n = 0;
  for (const Observation& o : observations)
    if (o.group == a) ++n;
  return n;
}

void Panel::validate() const {
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Observation& o = observations[i];
    if (o.group != 0 && o.group != 1)
      throw std::invalid_argument("panel: observation " + std::to_string(i) + " has A outside {0,1}");
    if (!(o.weight > 0.0))
      throw std::invalid_argument("panel: observation " + std::to_string(i) + " has non-positive weight");
    if (!std::isfinite(o.log_wage))
      throw std::invalid_argument("panel: observation " + std::to_string(i) + " has non-finite Y");
    if (o.z.size() != covariate_names.size())
      throw std::invalid_argument("panel: observation " + std::to_string(i) + " covariate width mismatch");
    if (o.history.tokens.empty())
      throw std::invalid_argument("panel: observation " + std::to_string(i) + " has empty history");
    for (std::size_t t = 0; t < o.history.tokens.size(); ++t) {
      const HistoryToken& tok = o.history.tokens[t];
      if (tok.occ < 0 || tok.occ >= vocabulary.size())
        throw std::invalid_argument("panel: observation " + std::to_string(i) + " token out of vocabulary");
      if (t > 0 && tok.year < o.history.tokens[t - 1].year)
        throw std::invalid_argument("panel: observation " + std::to_string(i) + " has decreasing years");
    }
  }
}

int FoldAssignment::fold(const std::string& unit) const {
  auto it = fold_of.find(unit);
  if (it == fold_of.end()) throw std::invalid_argument("fold assignment missing unit " + unit);
  return it->second;
}

FoldAssignment split_folds(const Panel& panel, int k, std::uint64_t seed) {
  std::vector<std::string> units = panel.unit_ids();
  if (k < 2) throw std::invalid_argument("split_folds: K must be at least 2");
  if (static_cast<std::size_t>(k) > units.size())
    throw std::invalid_argument("split_folds: K exceeds unit count");
  std::sort(units.begin(), units.end());  // order independent of ingestion
  Rng rng = Rng::derive(seed, {0x70f0u});
  rng.shuffle(units);
  FoldAssignment fa;
  fa.k = k;
  for (std::size_t i = 0; i < units.size(); ++i) fa.fold_of[units[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fa;
}

Panel clip_by_propensity(const Panel& panel,
                         const std::unordered_map<std::string, double>& e_hat,
                         double low, double high) {
  if (!(0.0 <= low && low < high && high <= 1.0))
    throw std::invalid_argument("clip_by_propensity: need 0 <= low < high <= 1");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < panel.observations.size(); ++i) {
    const std::string& u = panel.observations[i].unit_id;
    auto it = e_hat.find(u);
    if (it == e_hat.end()) throw std::invalid_argument("clip_by_propensity: no propensity for unit " + u);
    if (it->second > low && it->second < high) keep.push_back(i);
  }
  return subset(panel, keep);
}

Panel subset(const Panel& panel, const std::vector<std::size_t>& indices) {
  Panel out;
  out.vocabulary = panel.vocabulary;
  out.covariate_names = panel.covariate_names;
  out.observations.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= panel.observations.size()) throw std::out_of_range("subset: index out of range");
    out.observations.push_back(panel.observations[i]);
  }
  return out;
}

}  // namespace debiascope::panel
