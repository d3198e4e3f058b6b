#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "debiascope/panel.hpp"

namespace debiascope::panel {

namespace {

using json = nlohmann::json;

[[noreturn]] void parse_fail(const std::string& path, std::size_t row, const std::string& msg) {
  throw std::invalid_argument(path + ": row " + std::to_string(row) + ": " + msg);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& path, std::size_t row, const std::string& col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    parse_fail(path, row, "non-numeric value '" + s + "' in column " + col);
  }
}

long parse_int(const std::string& s, const std::string& path, std::size_t row, const std::string& col) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    parse_fail(path, row, "non-integer value '" + s + "' in column " + col);
  }
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RawRow {
  std::string unit;
  long year;
  std::string occ;
  int a;
  double y;
  double weight;
  std::vector<double> z;
  std::size_t order;  // input position, tie-break for equal years
};

}  // namespace

PanelFormat format_from_path(const std::string& path) {
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") return PanelFormat::kJsonl;
  return PanelFormat::kCsv;
}

Panel load_panel(const std::string& path) { return load_panel(path, format_from_path(path)); }

static Panel load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_panel: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw std::invalid_argument(path + ": empty file");
  std::vector<std::string> header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* req : {"unit_id", "year", "occ", "A", "Y", "weight"})
    if (!col.count(req)) throw std::invalid_argument(path + ": missing column " + req);
  std::size_t p = 0;
  while (col.count("z_" + std::to_string(p))) ++p;

  std::vector<RawRow> rows;
  std::size_t rownum = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rownum;
    std::vector<std::string> f = split_csv(line);
    if (f.size() != header.size()) parse_fail(path, rownum, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    RawRow r;
    r.unit = f[col["unit_id"]];
    r.year = parse_int(f[col["year"]], path, rownum, "year");
    r.occ = f[col["occ"]];
    long a = parse_int(f[col["A"]], path, rownum, "A");
    if (a != 0 && a != 1) parse_fail(path, rownum, "A must be 0 or 1, got " + std::to_string(a));
    r.a = static_cast<int>(a);
    r.y = parse_double(f[col["Y"]], path, rownum, "Y");
    if (!std::isfinite(r.y)) parse_fail(path, rownum, "Y is not finite");
    r.weight = parse_double(f[col["weight"]], path, rownum, "weight");
    if (!(r.weight > 0.0)) parse_fail(path, rownum, "weight must be positive");
    r.z.resize(p);
    for (std::size_t j = 0; j < p; ++j) r.z[j] = parse_double(f[col["z_" + std::to_string(j)]], path, rownum, "z_" + std::to_string(j));
    r.order = rownum;
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no data rows");

  std::stable_sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) {
    if (a.unit != b.unit) return a.unit < b.unit;
    if (a.year != b.year) return a.year < b.year;
    return a.order < b.order;
  });

  Panel panel;
  for (std::size_t j = 0; j < p; ++j) panel.covariate_names.push_back("z_" + std::to_string(j));
  for (const RawRow& r : rows) panel.vocabulary.add(r.occ);

  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].unit == rows[i].unit) ++j;
    Observation o;
    o.unit_id = rows[i].unit;
    for (std::size_t k = i; k < j; ++k)
      o.history.tokens.push_back({panel.vocabulary.id_of(rows[k].occ), static_cast<std::int32_t>(rows[k].year)});
    const RawRow& last = rows[j - 1];  // terminal year carries the labels
    o.group = last.a;
    o.log_wage = last.y;
    o.weight = last.weight;
    o.z = last.z;
    panel.observations.push_back(std::move(o));
    i = j;
  }
  panel.validate();
  return panel;
}

static Panel load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_panel: cannot open " + path);
  std::string line;
  std::size_t rownum = 0;
  struct Rec {
    std::string unit;
    json obj;
  };
  std::vector<Rec> recs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rownum;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const std::exception& e) {
      parse_fail(path, rownum, std::string("bad JSON: ") + e.what());
    }
    for (const char* req : {"unit_id", "A", "Y", "weight", "z", "history"})
      if (!obj.contains(req)) parse_fail(path, rownum, std::string("missing field ") + req);
    long a = obj["A"].is_number_integer() ? obj["A"].get<long>() : -1;
    if (a != 0 && a != 1) parse_fail(path, rownum, "A must be 0 or 1");
    recs.push_back({obj["unit_id"].get<std::string>(), std::move(obj)});
  }
  if (recs.empty()) throw std::invalid_argument(path + ": empty file");
  std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) { return a.unit < b.unit; });

  Panel panel;
  std::size_t p = recs[0].obj["z"].size();
  for (std::size_t j = 0; j < p; ++j) panel.covariate_names.push_back("z_" + std::to_string(j));
  for (const Rec& r : recs)
    for (const auto& tok : r.obj["history"]) {
      if (!tok.is_array() || tok.size() != 2) throw std::invalid_argument(path + ": history entries must be [occ, year] pairs");
      panel.vocabulary.add(tok[0].get<std::string>());
    }
  for (std::size_t idx = 0; idx < recs.size(); ++idx) {
    const json& obj = recs[idx].obj;
    Observation o;
    o.unit_id = recs[idx].unit;
    o.group = obj["A"].get<int>();
    o.log_wage = obj["Y"].get<double>();
    o.weight = obj["weight"].get<double>();
    if (obj["z"].size() != p) parse_fail(path, idx + 1, "inconsistent z width");
    for (const auto& v : obj["z"]) o.z.push_back(v.get<double>());
    for (const auto& tok : obj["history"])
      o.history.tokens.push_back({panel.vocabulary.id_of(tok[0].get<std::string>()), tok[1].get<std::int32_t>()});
    panel.observations.push_back(std::move(o));
  }
  panel.validate();
  return panel;
}

Panel load_panel(const std::string& path, PanelFormat format) {
  return format == PanelFormat::kCsv ? load_csv(path) : load_jsonl(path);
}

void write_panel(const Panel& panel, const std::string& path) { write_panel(panel, path, format_from_path(path)); }

void write_panel(const Panel& panel, const std::string& path, PanelFormat format) {
  panel.validate();
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("write_panel: cannot open " + path);
  if (format == PanelFormat::kCsv) {
    out << "unit_id,year,occ,A,Y,weight";
    for (const std::string& name : panel.covariate_names) out << "," << name;
    out << "\n";
    for (const Observation& o : panel.observations) {
      if (o.unit_id.find(',') != std::string::npos)
        throw std::invalid_argument("write_panel: unit id contains a comma: " + o.unit_id);
      for (const HistoryToken& t : o.history.tokens) {
        const std::string& label = panel.vocabulary.label(t.occ);
        if (label.find(',') != std::string::npos)
          throw std::invalid_argument("write_panel: occupation code contains a comma: " + label);
        out << o.unit_id << "," << t.year << "," << label << "," << o.group << ","
            << fmt17(o.log_wage) << "," << fmt17(o.weight);
        for (double z : o.z) out << "," << fmt17(z);
        out << "\n";
      }
    }
  } else {
    for (const Observation& o : panel.observations) {
      json obj;
      obj["unit_id"] = o.unit_id;
      obj["A"] = o.group;
      obj["Y"] = o.log_wage;
      obj["weight"] = o.weight;
      obj["z"] = o.z;
      json hist = json::array();
      for (const HistoryToken& t : o.history.tokens)
        hist.push_back(json::array({panel.vocabulary.label(t.occ), t.year}));
      obj["history"] = std::move(hist);
      out << obj.dump() << "\n";
    }
  }
}

}  // namespace debiascope::panel
