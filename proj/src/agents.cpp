#include "hypkt/agents.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <thread>

#include "hypkt/error.hpp"
#include "hypkt/hashing.hpp"
#include "hypkt/prompt_templates.hpp"
#include "json.hpp"

namespace hypkt::agents {

using nlohmann::json;

// ---- schema / prompts -------------------------------------------------------------

const Schema& teacher_schema() {
  static const Schema schema{"teacher_annotation", {"concepts", "dependencies"}};
  return schema;
}

const std::string& teacher_prompt_template() {
  static const std::string tmpl = kTeacherPromptV1;
  return tmpl;
}

std::string render_prompt(const std::string& tmpl, const std::string& question_text) {
  static const std::string slot = "{{question_text}}";
  const auto at = tmpl.find(slot);
  if (at == std::string::npos) throw Error(Errc::invalid_argument, "prompt template lacks {{question_text}}");
  std::string out = tmpl;
  out.replace(at, slot.size(), question_text);
  return out;
}

// ---- mock client ------------------------------------------------------------------

std::vector<std::string> MockLLMClient::default_vocabulary() {
  return {"counting",       "place value",     "addition",        "subtraction",
          "multiplication", "division",        "fractions",       "decimals",
          "ratios",         "linear equations", "quadratic equations", "systems of equations"};
}

MockLLMClient::MockLLMClient(std::uint64_t seed, std::vector<std::string> vocabulary)
    : seed_(seed), vocabulary_(std::move(vocabulary)) {
  if (vocabulary_.empty()) throw Error(Errc::invalid_argument, "mock vocabulary is empty");
  std::set<std::string> unique(vocabulary_.begin(), vocabulary_.end());
  if (unique.size() != vocabulary_.size()) throw Error(Errc::invalid_argument, "mock vocabulary has duplicates");
  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  for (const auto& name : vocabulary_) ranked.emplace_back(splitmix64(fnv1a(name) ^ seed_), name);
  std::sort(ranked.begin(), ranked.end());
  const std::size_t n = ranked.size();
  for (std::size_t r = 0; r < n; ++r) {
    levels_[ranked[r].second] = kgraph::kMinLevel + static_cast<int>(r * 4 / n);
  }
}

int MockLLMClient::level_of(const std::string& concept_name) const {
  auto it = levels_.find(concept_name);
  if (it == levels_.end()) throw Error(Errc::not_found, "mock vocabulary has no concept " + concept_name);
  return it->second;
}

std::string MockLLMClient::send(const std::string& prompt, const Schema& schema) {
  if (schema.name != teacher_schema().name) {
    throw Error(Errc::invalid_argument, "mock client only answers the " + teacher_schema().name + " schema");
  }
  const std::uint64_t h = splitmix64(fnv1a(prompt) ^ splitmix64(seed_));
  std::mt19937_64 rng(h);
  const std::size_t k = std::min<std::size_t>(1 + rng() % 3, vocabulary_.size());
  std::vector<std::string> chosen;
  while (chosen.size() < k) {
    const auto& name = vocabulary_[rng() % vocabulary_.size()];
    if (std::find(chosen.begin(), chosen.end(), name) == chosen.end()) chosen.push_back(name);
  }
  std::stable_sort(chosen.begin(), chosen.end(),
                   [&](const std::string& a, const std::string& b) { return level_of(a) < level_of(b); });
  json concepts = json::array(), deps = json::array();
  for (const auto& c : chosen) concepts.push_back({{"name", c}, {"level", level_of(c)}});
  for (std::size_t i = 0; i + 1 < chosen.size(); ++i) {
    if (level_of(chosen[i]) < level_of(chosen[i + 1])) deps.push_back({{"parent", chosen[i]}, {"child", chosen[i + 1]}});
  }
  return json{{"concepts", concepts}, {"dependencies", deps}, {"difficulty", "depends on the concept levels"}}.dump();
}

// ---- teacher agent ----------------------------------------------------------------

double difficulty_from_levels(const std::vector<AnnotatedConcept>& concepts) {
  if (concepts.empty()) throw Error(Errc::invalid_argument, "difficulty of an empty concept list");
  double total = 0.0;
  for (const auto& c : concepts) total += c.level;
  return total / static_cast<double>(concepts.size()) / kgraph::kMaxLevel;
}

TeacherAnnotation parse_annotation(const std::string& question_id, const std::string& question_text,
                                   const std::string& reply) {
  auto fail = [&](const std::string& why) { return Error(Errc::parse_error, "annotation for " + question_id + ": " + why, reply); };
  // Replies sometimes arrive wrapped in prose or code fences.
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) throw fail("no JSON object in reply");
  json doc;
  try {
    doc = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::exception& e) {
    throw fail(std::string("invalid JSON: ") + e.what());
  }
  for (const auto& key : teacher_schema().required_keys) {
    if (!doc.contains(key)) throw fail("missing key '" + key + "'");
  }
  TeacherAnnotation out;
  out.question_id = question_id;
  out.question_text = question_text;
  const json& cs = doc["concepts"];
  if (!cs.is_array() || cs.empty()) throw fail("'concepts' must be a non-empty array");
  for (const auto& c : cs) {
    if (!c.is_object() || !c.contains("name") || !c["name"].is_string() || !c.contains("level") ||
        !c["level"].is_number()) {
      throw fail("concept entries need a string 'name' and numeric 'level'");
    }
    std::string name = c["name"].get<std::string>();
    if (name.empty()) throw fail("empty concept name");
    const double raw = c["level"].get<double>();
    if (!std::isfinite(raw)) throw fail("non-finite concept level");
    const int level = static_cast<int>(std::clamp<double>(std::round(raw), kgraph::kMinLevel, kgraph::kMaxLevel));
    const bool seen = std::any_of(out.concepts.begin(), out.concepts.end(),
                                  [&](const AnnotatedConcept& a) { return a.name == name; });
    if (!seen) out.concepts.push_back({std::move(name), level});
  }
  const json& ds = doc["dependencies"];
  if (!ds.is_array()) throw fail("'dependencies' must be an array");
  auto level_of = [&](const std::string& name) {
    for (const auto& c : out.concepts)
      if (c.name == name) return c.level;
    return 0;
  };
  for (const auto& d : ds) {
    if (!d.is_object() || !d.contains("parent") || !d.contains("child") || !d["parent"].is_string() ||
        !d["child"].is_string()) {
      throw fail("dependency entries need string 'parent' and 'child'");
    }
    kgraph::Dependency dep{d["parent"].get<std::string>(), d["child"].get<std::string>()};
    const int lp = level_of(dep.parent), lc = level_of(dep.child);
    if (lp == 0 || lc == 0 || lp >= lc) continue;
    const bool dup = std::any_of(out.dependencies.begin(), out.dependencies.end(), [&](const kgraph::Dependency& e) {
      return e.parent == dep.parent && e.child == dep.child;
    });
    if (!dup) out.dependencies.push_back(std::move(dep));
  }
  out.difficulty = difficulty_from_levels(out.concepts);
  return out;
}

TeacherAnnotation teacher_annotate(const std::string& question_id, const std::string& question_text,
                                   LLMClient& client, const RetryPolicy& retry, const std::string& prompt_template) {
  if (question_text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(Errc::invalid_argument, "question " + question_id + " has empty text");
  }
  if (retry.attempts < 1) throw Error(Errc::invalid_argument, "retry attempts must be at least 1");
  const std::string prompt = render_prompt(prompt_template, question_text);
  double backoff = retry.initial_backoff_ms;
  for (int attempt = 1;; ++attempt) {
    try {
      const std::string reply = client.send(prompt, teacher_schema());
      return parse_annotation(question_id, question_text, reply);
    } catch (const Error& e) {
      const bool retriable = e.code() == Errc::transport_error || e.code() == Errc::parse_error;
      if (!retriable) throw;
      if (attempt >= retry.attempts) {
        throw Error(e.code(), e.message() + " (after " + std::to_string(attempt) + " attempts)", e.detail());
      }
    }
    if (retry.sleep) retry.sleep(backoff);
    else std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
    backoff *= retry.multiplier;
  }
}

void write_annotations(std::ostream& out, const std::vector<TeacherAnnotation>& annotations) {
  for (const auto& a : annotations) {
    json concepts = json::array(), deps = json::array();
    for (const auto& c : a.concepts) concepts.push_back({{"name", c.name}, {"level", c.level}});
    for (const auto& d : a.dependencies) deps.push_back({{"parent", d.parent}, {"child", d.child}});
    out << json{{"question_id", a.question_id}, {"question_text", a.question_text}, {"concepts", concepts},
                {"dependencies", deps}, {"difficulty", a.difficulty}}
               .dump()
        << '\n';
  }
}

std::vector<TeacherAnnotation> read_annotations(std::istream& in) {
  std::vector<TeacherAnnotation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "annotation line " + std::to_string(lineno);
    try {
      const json rec = json::parse(line);
      TeacherAnnotation a;
      a.question_id = rec.at("question_id").get<std::string>();
      a.question_text = rec.value("question_text", "");
      for (const auto& c : rec.at("concepts")) {
        const int level = c.at("level").get<int>();
        if (level < kgraph::kMinLevel || level > kgraph::kMaxLevel) {
          throw Error(Errc::parse_error, where + ": level outside 1..4");
        }
        a.concepts.push_back({c.at("name").get<std::string>(), level});
      }
      for (const auto& d : rec.at("dependencies")) {
        a.dependencies.push_back({d.at("parent").get<std::string>(), d.at("child").get<std::string>()});
      }
      a.difficulty = rec.at("difficulty").get<double>();
      if (std::abs(a.difficulty - difficulty_from_levels(a.concepts)) > 1e-9) {
        throw Error(Errc::parse_error, where + ": stored difficulty disagrees with concept levels");
      }
      out.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw Error(Errc::parse_error, where + ": " + e.what());
    }
  }
  return out;
}

kgraph::KnowledgeGraph build_catalog(const std::vector<TeacherAnnotation>& annotations,
                                     kgraph::HierarchyPolicy policy) {
  std::vector<std::string> order;
  std::map<std::string, std::array<int, kgraph::kMaxLevel + 1>> votes;
  for (const auto& a : annotations) {
    for (const auto& c : a.concepts) {
      auto [it, fresh] = votes.try_emplace(c.name);
      if (fresh) {
        it->second.fill(0);
        order.push_back(c.name);
      }
      ++it->second[c.level];
    }
  }
  std::vector<kgraph::ConceptNode> concepts;
  for (const auto& name : order) {
    const auto& v = votes[name];
    int best = kgraph::kMinLevel;
    for (int l = kgraph::kMinLevel; l <= kgraph::kMaxLevel; ++l)
      if (v[l] > v[best]) best = l;
    concepts.push_back({name, name, best});
  }
  std::vector<kgraph::QuestionNode> questions;
  std::vector<kgraph::Dependency> deps;
  for (const auto& a : annotations) {
    kgraph::QuestionNode q{a.question_id, a.question_text, a.difficulty, {}};
    for (const auto& c : a.concepts) q.concept_ids.push_back(c.name);
    questions.push_back(std::move(q));
    for (const auto& d : a.dependencies) {
      const int lp = concepts[std::find(order.begin(), order.end(), d.parent) - order.begin()].level;
      const int lc = concepts[std::find(order.begin(), order.end(), d.child) - order.begin()].level;
      // Level voting can flatten a dependency; those are dropped.
      if (lp < lc) deps.push_back(d);
    }
  }
  return kgraph::build_graph(std::move(questions), std::move(concepts), deps, policy);
}

// ---- student agent ----------------------------------------------------------------

LevelBucket bucket_of(double mean_level) {
  if (mean_level < 2.5) return LevelBucket::basic;
  if (mean_level < 3.5) return LevelBucket::intermediate;
  return LevelBucket::difficult;
}

void StudentProfile::validate() const {
  for (double p : proficiency) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::invalid_argument, "profile " + id + ": proficiency outside [0,1]");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(Errc::invalid_argument, "profile " + id + ": forgetting rate must be positive");
  }
}

double forgetting(double lambda, double mean_level, double dt) {
  if (!(lambda > 0.0)) throw Error(Errc::invalid_argument, "forgetting: lambda must be positive");
  if (!(mean_level >= kgraph::kMinLevel && mean_level <= kgraph::kMaxLevel)) {
    throw Error(Errc::invalid_argument, "forgetting: mean level outside [1,4]");
  }
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw Error(Errc::domain_error, "forgetting: dt must be finite and >= 0");
  return std::exp(-lambda * mean_level * dt);
}

Tensor engagement(const Tensor& x_q, const Tensor& x_c, double dt, const EngagementParams& params) {
  if (!std::isfinite(dt) || dt < 0.0) throw Error(Errc::domain_error, "engagement: dt must be finite and >= 0");
  if (x_q.rank() != 2 || x_c.rank() != 2 || x_q.extent(0) != 1 || x_c.extent(0) != 1) {
    throw Error(Errc::shape_mismatch, "engagement: inputs must be row vectors");
  }
  const std::size_t need = x_q.extent(1) + x_c.extent(1) + 1;
  if (x_q.extent(1) != x_c.extent(1) || params.w.numel() != need) {
    throw Error(Errc::shape_mismatch, "engagement: expected embeddings of equal width matching the weight vector (" +
                                          std::to_string(params.w.numel()) + " weights)");
  }
  const auto features = diff::concat({x_q, x_c, Tensor::from({1, 1}, {std::log1p(dt)})}, 1);
  const auto w = diff::reshape(params.w, {need, 1});
  return diff::sigmoid(diff::reshape(diff::matmul(features, w), {1}) + params.b);
}

namespace {

Tensor normal_tensor(std::mt19937_64& rng, diff::Shape shape, double stddev, bool requires_grad) {
  std::normal_distribution<double> nd(0.0, stddev);
  std::vector<double> v(diff::numel_of(shape));
  for (double& x : v) x = nd(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

StudentAgent::StudentAgent(kgraph::KnowledgeGraph catalog, StudentConfig config)
    : catalog_(std::move(catalog)), config_(config) {
  if (catalog_.questions().empty()) throw Error(Errc::invalid_argument, "student agent needs a non-empty catalog");
  if (config_.embed_dim == 0 || config_.hidden_dim == 0) throw Error(Errc::invalid_argument, "zero dimension");
  if (config_.max_gap < 1) throw Error(Errc::invalid_argument, "max_gap must be at least 1");
  const std::size_t e = config_.embed_dim, hd = config_.hidden_dim;
  const bool rg = config_.trainable;
  std::mt19937_64 rng(config_.weight_seed);
  question_embed_ = normal_tensor(rng, {catalog_.questions().size(), e}, 1.0, rg);
  concept_embed_ = normal_tensor(rng, {catalog_.concepts().size(), e}, 1.0, rg);
  engagement_.w = normal_tensor(rng, {1, 2 * e + 1}, 1.0 / std::sqrt(double(2 * e + 1)), rg);
  engagement_.b = Tensor::scalar(0.0, rg);
  lstm_w_ = normal_tensor(rng, {2 * e + hd, 4 * hd}, 1.0 / std::sqrt(double(2 * e + hd)), rg);
  lstm_b_ = Tensor::zeros({1, 4 * hd}, rg);
  readout_ = normal_tensor(rng, {hd, 1}, 1.0 / std::sqrt(double(hd)), rg);
}

std::vector<Tensor> StudentAgent::parameters() const {
  return {question_embed_, concept_embed_, engagement_.w, engagement_.b, lstm_w_, lstm_b_, readout_};
}

LstmState StudentAgent::initial_state() const {
  return {Tensor::zeros({1, config_.hidden_dim}), Tensor::zeros({1, config_.hidden_dim})};
}

StepForward StudentAgent::forward(const StudentProfile& profile, const std::string& question_id, double dt,
                                  const LstmState& prev) const {
  const auto qi = catalog_.question_index(question_id);
  if (!qi) throw Error(Errc::not_found, "student agent: unseen question id " + question_id);
  const std::size_t hd = config_.hidden_dim;
  if (prev.h.numel() != hd || prev.c.numel() != hd) {
    throw Error(Errc::shape_mismatch, "student agent: state width differs from hidden_dim");
  }
  const auto& q = catalog_.questions()[*qi];
  diff::Index cix;
  for (const auto& c : q.concept_ids) cix.push_back(*catalog_.concept_index(c));
  const auto x_q = diff::gather_rows(question_embed_, {*qi});
  // Uniform concept weights.
  const auto x_c = diff::sum(diff::gather_rows(concept_embed_, cix), 0) / static_cast<double>(cix.size());
  const double mean_level = catalog_.mean_concept_level(*qi);

  StepForward out;
  out.engagement = engagement(x_q, x_c, dt, engagement_);
  out.forgetting = forgetting(profile.lambda, mean_level, dt);
  const auto carried = prev.h * (out.engagement * out.forgetting);
  const auto gates = diff::matmul(diff::concat({x_q, x_c, carried}, 1), lstm_w_) + lstm_b_;
  const auto i = diff::sigmoid(diff::slice(gates, 1, 0, hd));
  const auto f = diff::sigmoid(diff::slice(gates, 1, hd, hd));
  const auto o = diff::sigmoid(diff::slice(gates, 1, 2 * hd, hd));
  const auto g = diff::tanh(diff::slice(gates, 1, 3 * hd, hd));
  out.next.c = f * prev.c + i * g;
  out.next.h = o * diff::tanh(out.next.c);
  const double prior =
      config_.response_gain * (profile.proficiency[static_cast<int>(bucket_of(mean_level))] - q.difficulty);
  out.p_correct = diff::sigmoid(diff::reshape(diff::matmul(out.next.h, readout_), {1}) + prior);
  return out;
}

std::pair<TraceRecord, LstmState> StudentAgent::step(const StudentProfile& profile, const std::string& question_id,
                                                     double dt, std::int64_t timestamp, const LstmState& prev,
                                                     std::mt19937_64& rng) const {
  const auto fw = forward(profile, question_id, dt, prev);
  TraceRecord rec;
  rec.question_id = question_id;
  const auto& q = catalog_.question_by_id(question_id);
  rec.concept_ids = q.concept_ids;
  rec.engagement = fw.engagement.item();
  rec.forgetting = fw.forgetting;
  rec.p_correct = fw.p_correct.item();
  // 53-bit uniform from the raw engine output keeps streams portable.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  rec.response = u < rec.p_correct ? 1 : 0;
  rec.timestamp = timestamp;
  auto path = q.concept_ids;
  std::stable_sort(path.begin(), path.end(), [&](const std::string& a, const std::string& b) {
    return catalog_.concept_by_id(a).level < catalog_.concept_by_id(b).level;
  });
  path.push_back(std::to_string(rec.response));
  rec.reasoning_path = std::move(path);
  return {std::move(rec), LstmState{fw.next.h.detach(), fw.next.c.detach()}};
}

std::uint64_t profile_stream_seed(std::uint64_t root_seed, const StudentProfile& profile) {
  return splitmix64(root_seed ^ splitmix64(profile.seed ^ fnv1a(profile.id)));
}

SyntheticTrace StudentAgent::simulate(const StudentProfile& profile, std::size_t steps, std::uint64_t root_seed) const {
  profile.validate();
  if (steps == 0) throw Error(Errc::invalid_argument, "simulate: zero steps");
  std::mt19937_64 rng(profile_stream_seed(root_seed, profile));
  const auto& questions = catalog_.questions();
  SyntheticTrace trace{profile.id, {}};
  LstmState state = initial_state();
  std::map<std::string, std::int64_t> last_seen;
  std::int64_t clock = 0;
  bool first = true;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto& q = questions[rng() % questions.size()];
    const std::int64_t prev_clock = clock;
    clock += 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(config_.max_gap));
    std::int64_t since = -1;
    for (const auto& c : q.concept_ids) {
      auto it = last_seen.find(c);
      if (it != last_seen.end()) since = std::max(since, it->second);
    }
    const double dt = first ? 0.0 : static_cast<double>(clock - (since >= 0 ? since : prev_clock));
    auto [rec, next] = step(profile, q.id, dt, clock, state, rng);
    trace.records.push_back(std::move(rec));
    state = next;
    for (const auto& c : q.concept_ids) last_seen[c] = clock;
    first = false;
  }
  return trace;
}

std::vector<SyntheticTrace> generate_dataset(const StudentAgent& agent, const std::vector<StudentProfile>& profiles,
                                             std::size_t steps_per_student, std::uint64_t seed) {
  if (steps_per_student == 0) throw Error(Errc::invalid_argument, "generate_dataset: zero steps per student");
  std::set<std::string> ids;
  for (const auto& p : profiles) {
    if (!ids.insert(p.id).second) throw Error(Errc::invalid_argument, "duplicate profile id " + p.id);
  }
  std::vector<SyntheticTrace> out;
  out.reserve(profiles.size());
  for (const auto& p : profiles) out.push_back(agent.simulate(p, steps_per_student, seed));
  return out;
}

std::vector<toolkit::StudentSequence> to_sequences(const std::vector<SyntheticTrace>& traces) {
  std::vector<toolkit::StudentSequence> out;
  for (const auto& t : traces) {
    toolkit::StudentSequence s{t.student_id, {}};
    for (const auto& r : t.records) s.interactions.push_back({t.student_id, r.question_id, r.concept_ids, r.response, r.timestamp});
    out.push_back(std::move(s));
  }
  return out;
}

void write_traces(std::ostream& out, const std::vector<SyntheticTrace>& traces) {
  auto join = [](const std::vector<std::string>& ids, const char* sep) {
    std::string s;
    for (const auto& id : ids) s += (s.empty() ? "" : sep) + id;
    return s;
  };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "student_id,question_id,concept_ids,correct,timestamp,engagement,forgetting,reasoning_path\n";
  for (const auto& t : traces) {
    for (const auto& r : t.records) {
      out << toolkit::csv_field(t.student_id) << ',' << toolkit::csv_field(r.question_id) << ','
          << toolkit::csv_field(join(r.concept_ids, ";")) << ',' << r.response << ',' << r.timestamp << ','
          << num(r.engagement) << ',' << num(r.forgetting) << ',' << toolkit::csv_field(join(r.reasoning_path, ">"))
          << '\n';
    }
  }
}

}  // namespace hypkt::agents
