#include "hypkt/interactions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "hypkt/error.hpp"
#include "json.hpp"

namespace hypkt::toolkit {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxProblems = 10;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_concepts(const std::string& cell, char delim) {
  std::vector<std::string> out;
  std::string piece;
  std::istringstream in(cell);
  while (std::getline(in, piece, delim)) {
    piece = trim(piece);
    if (!piece.empty()) out.push_back(piece);
  }
  return out;
}

// Strict integer parse; returns false on any trailing garbage.
bool parse_int(const std::string& s, std::int64_t& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stoll(t, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == t.size();
}

struct RowSink {
  LoadReport report;
  std::vector<Interaction> rows;

  void bad(std::size_t line, const std::string& why) {
    ++report.malformed;
    if (report.problems.size() < kMaxProblems) report.problems.push_back("line " + std::to_string(line) + ": " + why);
  }

  // Returns an empty string when the fields form a valid interaction.
  std::string validate(Interaction& it, const std::string& correct, const std::string& timestamp) {
    std::int64_t c = 0, t = 0;
    if (trim(it.student_id).empty()) return "empty student id";
    if (trim(it.question_id).empty()) return "empty question id";
    if (it.concept_ids.empty()) return "no concepts";
    if (!parse_int(correct, c) || (c != 0 && c != 1)) return "correct must be 0 or 1, got '" + correct + "'";
    if (!parse_int(timestamp, t) || t < 0) return "timestamp must be a non-negative integer, got '" + timestamp + "'";
    it.student_id = trim(it.student_id);
    it.question_id = trim(it.question_id);
    it.correct = static_cast<int>(c);
    it.timestamp = t;
    return {};
  }
};

void parse_csv(std::istream& in, const ColumnMap& cols, RowSink& sink) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) header = split_csv_line(line);
  }
  if (header.empty()) throw Error(Errc::parse_error, "interaction file has no header");
  for (auto& h : header) h = trim(h);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(Errc::parse_error, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cs = column(cols.student), cq = column(cols.question), cc = column(cols.concepts),
                    cr = column(cols.correct), ct = column(cols.timestamp);
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ++sink.report.rows;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      sink.bad(lineno, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    Interaction it{f[cs], f[cq], split_concepts(f[cc], cols.concept_delimiter), 0, 0};
    const std::string why = sink.validate(it, f[cr], f[ct]);
    if (why.empty()) sink.rows.push_back(std::move(it));
    else sink.bad(lineno, why);
  }
}

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return std::to_string(v.get<std::int64_t>());
  return v.dump();
}

void parse_jsonl(std::istream& in, const ColumnMap& cols, RowSink& sink) {
  std::string line;
  std::size_t lineno = 0;
  bool checked_fields = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ++sink.report.rows;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception&) {
      sink.bad(lineno, "invalid JSON");
      continue;
    }
    if (!rec.is_object()) {
      sink.bad(lineno, "record is not an object");
      continue;
    }
    if (!checked_fields) {
      for (const auto* name : {&cols.student, &cols.question, &cols.concepts, &cols.correct, &cols.timestamp}) {
        if (!rec.contains(*name)) throw Error(Errc::parse_error, "missing column '" + *name + "'");
      }
      checked_fields = true;
    }
    Interaction it;
    std::string correct, timestamp;
    try {
      it.student_id = json_scalar(rec.at(cols.student));
      it.question_id = json_scalar(rec.at(cols.question));
      const json& c = rec.at(cols.concepts);
      if (c.is_array()) {
        for (const auto& e : c) {
          const std::string s = trim(json_scalar(e));
          if (!s.empty()) it.concept_ids.push_back(s);
        }
      } else {
        it.concept_ids = split_concepts(json_scalar(c), cols.concept_delimiter);
      }
      correct = json_scalar(rec.at(cols.correct));
      timestamp = json_scalar(rec.at(cols.timestamp));
    } catch (const json::exception& e) {
      sink.bad(lineno, e.what());
      continue;
    }
    const std::string why = sink.validate(it, correct, timestamp);
    if (why.empty()) sink.rows.push_back(std::move(it));
    else sink.bad(lineno, why);
  }
}

}  // namespace

Format format_from_path(const std::string& path) {
  auto ends_with = [&](const std::string& suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".jsonl") || ends_with(".json")) return Format::jsonl;
  return Format::csv;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char ch : value) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<StudentSequence> group_sequences(const std::vector<Interaction>& rows) {
  std::vector<StudentSequence> out;
  std::unordered_map<std::string, std::size_t> ix;
  for (const auto& r : rows) {
    auto [it, fresh] = ix.emplace(r.student_id, out.size());
    if (fresh) out.push_back({r.student_id, {}});
    out[it->second].interactions.push_back(r);
  }
  for (auto& s : out) {
    std::stable_sort(s.interactions.begin(), s.interactions.end(),
                     [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
  }
  return out;
}

std::vector<StudentSequence> parse_interactions(std::istream& in, Format format, const ColumnMap& columns,
                                                LoadReport* report) {
  RowSink sink;
  if (format == Format::csv) parse_csv(in, columns, sink);
  else parse_jsonl(in, columns, sink);
  if (report) *report = sink.report;
  const auto& r = sink.report;
  if (r.rows > 0 && static_cast<double>(r.malformed) > columns.max_malformed_fraction * static_cast<double>(r.rows)) {
    std::string first = r.problems.empty() ? "" : "; first: " + r.problems.front();
    throw Error(Errc::parse_error, std::to_string(r.malformed) + " of " + std::to_string(r.rows) +
                                       " rows malformed, above the allowed fraction" + first);
  }
  return group_sequences(sink.rows);
}

std::vector<StudentSequence> load_interactions(const std::string& path, Format format, const ColumnMap& columns,
                                               LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read interaction file " + path);
  return parse_interactions(in, format, columns, report);
}

void write_interactions(std::ostream& out, const std::vector<StudentSequence>& sequences, Format format) {
  auto join = [](const std::vector<std::string>& ids) {
    std::string s;
    for (const auto& id : ids) s += (s.empty() ? "" : ";") + id;
    return s;
  };
  if (format == Format::csv) out << "student_id,question_id,concept_ids,correct,timestamp\n";
  for (const auto& seq : sequences) {
    for (const auto& it : seq.interactions) {
      if (format == Format::csv) {
        out << csv_field(it.student_id) << ',' << csv_field(it.question_id) << ',' << csv_field(join(it.concept_ids))
            << ',' << it.correct << ',' << it.timestamp << '\n';
      } else {
        out << json{{"student_id", it.student_id}, {"question_id", it.question_id}, {"concept_ids", it.concept_ids},
                    {"correct", it.correct}, {"timestamp", it.timestamp}}
                   .dump()
            << '\n';
      }
    }
  }
}

void save_interactions(const std::string& path, const std::vector<StudentSequence>& sequences, Format format) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write interaction file " + path);
  write_interactions(out, sequences, format);
}

std::pair<std::vector<StudentSequence>, std::vector<StudentSequence>> split(
    const std::vector<StudentSequence>& sequences, double ratio, std::uint64_t seed) {
  const std::size_t n = sequences.size();
  if (n < 2) throw Error(Errc::invalid_argument, "split needs at least 2 students, got " + std::to_string(n));
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(Errc::invalid_argument, "split ratio must be in (0,1)");
  std::size_t n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;
  std::pair<std::vector<StudentSequence>, std::vector<StudentSequence>> out;
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? out.first : out.second).push_back(sequences[i]);
  return out;
}

std::vector<StudentSequence> chunk(const std::vector<StudentSequence>& sequences, std::size_t window) {
  if (window == 0) throw Error(Errc::invalid_argument, "chunk window must be positive");
  std::vector<StudentSequence> out;
  for (const auto& s : sequences) {
    for (std::size_t start = 0; start < s.interactions.size(); start += window) {
      const std::size_t end = std::min(start + window, s.interactions.size());
      out.push_back({s.student_id, {s.interactions.begin() + start, s.interactions.begin() + end}});
    }
  }
  return out;
}

std::size_t interaction_count(const std::vector<StudentSequence>& sequences) {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.interactions.size();
  return n;
}

}  // namespace hypkt::toolkit
