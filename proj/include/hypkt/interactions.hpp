#pragma once

// Student interaction logs: loading (CSV / JSON-lines), grouping into
// per-student sequences, serialization, student-level splitting and chunking.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace hypkt::toolkit {

struct Interaction {
  std::string student_id;
  std::string question_id;
  std::vector<std::string> concept_ids;
  int correct = 0;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

struct StudentSequence {
  std::string student_id;
  std::vector<Interaction> interactions;

  bool operator==(const StudentSequence&) const = default;
};

enum class Format { csv, jsonl };

Format format_from_path(const std::string& path);

struct ColumnMap {
  std::string student = "student_id";
  std::string question = "question_id";
  std::string concepts = "concept_ids";
  std::string correct = "correct";
  std::string timestamp = "timestamp";
  char concept_delimiter = ';';
  // Abort when more than this fraction of data rows is malformed.
  double max_malformed_fraction = 0.01;
};

struct LoadReport {
  std::size_t rows = 0;
  std::size_t malformed = 0;
  std::vector<std::string> problems;  // first few, "line N: reason"
};

// Groups by student in order of first appearance; each sequence is sorted by
// timestamp with ties kept in input order.
std::vector<StudentSequence> group_sequences(const std::vector<Interaction>& rows);

std::vector<StudentSequence> parse_interactions(std::istream& in, Format format, const ColumnMap& columns = {},
                                                LoadReport* report = nullptr);
std::vector<StudentSequence> load_interactions(const std::string& path, Format format,
                                               const ColumnMap& columns = {}, LoadReport* report = nullptr);

void write_interactions(std::ostream& out, const std::vector<StudentSequence>& sequences, Format format);
void save_interactions(const std::string& path, const std::vector<StudentSequence>& sequences, Format format);

// Student-level split: |train| = round(ratio * N), deterministic under seed.
std::pair<std::vector<StudentSequence>, std::vector<StudentSequence>> split(
    const std::vector<StudentSequence>& sequences, double ratio, std::uint64_t seed);

// Windows of at most `window` interactions; each window keeps the student id.
std::vector<StudentSequence> chunk(const std::vector<StudentSequence>& sequences, std::size_t window = 200);

std::size_t interaction_count(const std::vector<StudentSequence>& sequences);

// CSV field splitting with double-quote escaping, and the matching writer.
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_field(const std::string& value);

}  // namespace hypkt::toolkit
