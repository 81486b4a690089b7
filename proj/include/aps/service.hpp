#pragma once
// Live survey-planning sessions: per-session posterior and intervals, batch
// recording, next-batch recommendations and what-if comparisons, persisted as
// an append-only JSON-lines journal and served over HTTP/JSON.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "aps/allocation.hpp"
#include "aps/bounds.hpp"
#include "aps/error.hpp"
#include "aps/log.hpp"
#include "aps/posterior.hpp"

namespace aps {

class NotFound : public Error {
 public:
  using Error::Error;
};

struct CategoryDefinition {
  std::string name;
  double weight = 0.0;
  /// Per-category target; infinity means unconstrained.
  double theta = 1.0;
  std::vector<double> alpha;
  std::optional<Truncation> truncation;
};

struct SessionDefinition {
  std::vector<CategoryDefinition> categories;
  std::size_t symbols = 2;
  std::int64_t budget = 0;
  std::optional<double> eta;
  double theta_overall = kInfinity;

  std::size_t arms() const { return categories.size(); }
  std::vector<double> weights() const {
    std::vector<double> w;
    for (const auto& c : categories) w.push_back(c.weight);
    return w;
  }
  std::vector<double> thetas() const {
    std::vector<double> t;
    for (const auto& c : categories) t.push_back(c.theta);
    return t;
  }
  DeltaSchedule schedule() const {
    return DeltaSchedule{arms(), symbols, budget, eta.value_or(1.0 / static_cast<double>(budget))};
  }
  PriorSpec prior() const {
    PriorSpec p;
    for (const auto& c : categories) {
      p.alpha.push_back(c.alpha);
      p.truncation.push_back(c.truncation);
    }
    return p;
  }

  void validate() const {
    if (categories.empty()) throw InvalidInput("a session needs at least one category", "categories");
    if (symbols < 2) throw InvalidInput("symbols must be at least 2", "symbols");
    if (budget < 1) throw InvalidInput("budget must be a positive integer", "budget");
    if (eta && !(*eta > 0.0 && *eta <= 1.0)) throw InvalidInput("eta must lie in (0, 1]", "eta");
    if (!(theta_overall > 0.0)) throw InvalidInput("theta_overall must be positive", "theta_overall");
    double s = 0.0;
    bool any_finite = std::isfinite(theta_overall);
    for (std::size_t k = 0; k < categories.size(); ++k) {
      const auto& c = categories[k];
      const std::string at = "categories[" + std::to_string(k) + "]";
      if (c.name.empty()) throw InvalidInput("category name is empty", at + ".name");
      for (std::size_t j = 0; j < k; ++j) {
        if (categories[j].name == c.name) throw InvalidInput("duplicate category name '" + c.name + "'", at + ".name");
      }
      if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw InvalidInput("weight must be nonnegative", at + ".weight");
      if (!(c.theta > 0.0)) throw InvalidInput("theta must be positive", at + ".theta");
      any_finite = any_finite || std::isfinite(c.theta);
      if (c.alpha.size() != symbols) throw InvalidInput("alpha must have one entry per symbol", at + ".alpha");
      for (double a : c.alpha) {
        if (!(a > 0.0) || !std::isfinite(a)) throw InvalidInput("alpha entries must be positive", at + ".alpha");
      }
      if (c.truncation) {
        if (symbols != 2) throw InvalidInput("truncation requires a binary alphabet", at + ".truncation");
        if (!(c.truncation->lower >= 0.0 && c.truncation->lower < c.truncation->upper && c.truncation->upper <= 1.0)) {
          throw InvalidInput("truncation must satisfy 0 <= lower < upper <= 1", at + ".truncation");
        }
      }
      s += c.weight;
    }
    if (std::fabs(s - 1.0) > 1e-9) throw InvalidInput("weights must sum to 1", "categories.weight");
    if (!any_finite) throw InvalidInput("at least one theta must be finite", "theta");
  }
};

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double theta_from_json(const nlohmann::json& j, const char* key, double fallback, const std::string& field) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_null()) return kInfinity;
  if (!v.is_number()) throw InvalidInput(std::string(key) + " must be a number or null", field);
  return v.get<double>();
}

template <class T>
T get_field(const nlohmann::json& j, const char* key, const std::string& field) {
  if (!j.contains(key)) throw InvalidInput(std::string("missing required field '") + key + "'", field);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInput(std::string("field '") + key + "' has the wrong type", field);
  }
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

}  // namespace detail

inline SessionDefinition definition_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("session definition must be a JSON object", "");
  SessionDefinition d;
  d.budget = detail::get_field<std::int64_t>(j, "budget", "budget");
  if (j.contains("symbols")) d.symbols = detail::get_field<std::size_t>(j, "symbols", "symbols");
  if (j.contains("eta") && !j.at("eta").is_null()) d.eta = detail::get_field<double>(j, "eta", "eta");
  d.theta_overall = detail::theta_from_json(j, "theta_overall", kInfinity, "theta_overall");
  if (!j.contains("categories") || !j.at("categories").is_array()) {
    throw InvalidInput("'categories' must be an array", "categories");
  }
  const auto& cats = j.at("categories");
  for (std::size_t k = 0; k < cats.size(); ++k) {
    const auto& c = cats[k];
    const std::string at = "categories[" + std::to_string(k) + "]";
    if (!c.is_object()) throw InvalidInput("category must be an object", at);
    CategoryDefinition cd;
    cd.name = detail::get_field<std::string>(c, "name", at + ".name");
    cd.weight = detail::get_field<double>(c, "weight", at + ".weight");
    cd.theta = detail::theta_from_json(c, "theta", 1.0, at + ".theta");
    if (c.contains("alpha")) {
      cd.alpha = detail::get_field<std::vector<double>>(c, "alpha", at + ".alpha");
    } else {
      cd.alpha.assign(d.symbols, 1.0);
    }
    if (c.contains("truncation") && !c.at("truncation").is_null()) {
      const auto t = detail::get_field<std::vector<double>>(c, "truncation", at + ".truncation");
      if (t.size() != 2) throw InvalidInput("truncation must be [lower, upper]", at + ".truncation");
      cd.truncation = Truncation{t[0], t[1]};
    }
    d.categories.push_back(std::move(cd));
  }
  d.validate();
  return d;
}

inline nlohmann::json to_json(const SessionDefinition& d) {
  nlohmann::json j;
  j["budget"] = d.budget;
  j["symbols"] = d.symbols;
  j["eta"] = d.eta ? nlohmann::json(*d.eta) : nlohmann::json(nullptr);
  j["theta_overall"] = detail::finite_or_null(d.theta_overall);
  j["categories"] = nlohmann::json::array();
  for (const auto& c : d.categories) {
    nlohmann::json cj{{"name", c.name}, {"weight", c.weight}, {"theta", detail::finite_or_null(c.theta)}, {"alpha", c.alpha}};
    cj["truncation"] = c.truncation ? nlohmann::json{c.truncation->lower, c.truncation->upper} : nlohmann::json(nullptr);
    j["categories"].push_back(std::move(cj));
  }
  return j;
}

/// Per-category symbol counts of one batch: counts[k][l].
using BatchCounts = std::vector<std::vector<std::int64_t>>;

/// Accepts {"counts": [[...], ...]} or, for binary sessions,
/// {"samples": [...], "positives": [...]}.
inline BatchCounts batch_from_json(const nlohmann::json& j, std::size_t K, std::size_t L) {
  if (!j.is_object()) throw InvalidInput("batch must be a JSON object", "");
  BatchCounts counts;
  if (j.contains("counts")) {
    counts = detail::get_field<BatchCounts>(j, "counts", "counts");
  } else if (j.contains("samples") || j.contains("positives")) {
    if (L != 2) throw InvalidInput("samples/positives form requires a binary session; send 'counts'", "counts");
    const auto t = detail::get_field<std::vector<std::int64_t>>(j, "samples", "samples");
    const auto p = detail::get_field<std::vector<std::int64_t>>(j, "positives", "positives");
    if (t.size() != K || p.size() != K) throw InvalidInput("need one entry per category", t.size() != K ? "samples" : "positives");
    for (std::size_t k = 0; k < K; ++k) {
      if (p[k] > t[k]) throw InvalidInput("positives exceed samples", "positives[" + std::to_string(k) + "]");
      counts.push_back({t[k] - p[k], p[k]});
    }
  } else {
    throw InvalidInput("batch needs 'counts' or 'samples' and 'positives'", "counts");
  }
  if (counts.size() != K) throw InvalidInput("need one count row per category", "counts");
  for (std::size_t k = 0; k < K; ++k) {
    if (counts[k].size() != L) throw InvalidInput("count row must have one entry per symbol", "counts[" + std::to_string(k) + "]");
    for (auto c : counts[k]) {
      if (c < 0) throw InvalidInput("counts must be nonnegative", "counts[" + std::to_string(k) + "]");
    }
  }
  return counts;
}

/// Temporary target overrides for a recommendation.
struct TargetOverrides {
  std::optional<std::vector<double>> theta;
  std::optional<double> theta_overall;
};

inline TargetOverrides overrides_from_json(const nlohmann::json& j, std::size_t K) {
  TargetOverrides o;
  if (j.contains("theta") && !j.at("theta").is_null()) {
    const auto& t = j.at("theta");
    if (!t.is_array() || t.size() != K) throw InvalidInput("theta must be an array with one entry per category", "theta");
    std::vector<double> v;
    for (std::size_t k = 0; k < K; ++k) {
      if (t[k].is_null()) v.push_back(kInfinity);
      else if (t[k].is_number()) v.push_back(t[k].get<double>());
      else throw InvalidInput("theta entries must be numbers or null", "theta[" + std::to_string(k) + "]");
    }
    o.theta = std::move(v);
  }
  if (j.contains("theta_overall")) o.theta_overall = detail::theta_from_json(j, "theta_overall", kInfinity, "theta_overall");
  return o;
}

class Session {
 public:
  Session(std::string id, SessionDefinition def)
      : id_(std::move(id)), def_(std::move(def)), state_((def_.validate(), def_.prior())),
        intervals_(def_.arms(), def_.symbols) {
    refresh();
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  const SessionDefinition& definition() const { return def_; }

  /// Validates and applies a batch. `commit` runs under the session lock after
  /// validation and before the state changes; if it throws, nothing changes.
  nlohmann::json record_batch(const BatchCounts& counts, const std::function<void()>& commit = {}) {
    std::unique_lock lock(mu_);
    const std::size_t K = def_.arms();
    const std::size_t L = def_.symbols;
    if (counts.size() != K) throw InvalidInput("need one count row per category", "counts");
    std::int64_t added = 0;
    for (std::size_t k = 0; k < K; ++k) {
      if (counts[k].size() != L) throw InvalidInput("count row must have one entry per symbol", "counts");
      for (auto c : counts[k]) {
        if (c < 0) throw InvalidInput("counts must be nonnegative", "counts");
        added += c;
      }
    }
    if (added == 0) return estimates_unlocked();
    if (total() + added > def_.budget) {
      throw InvalidInput("batch of " + std::to_string(added) + " exceeds the remaining budget of " +
                             std::to_string(def_.budget - total()),
                         "counts");
    }
    if (commit) commit();
    for (std::size_t k = 0; k < K; ++k) state_.apply_counts(k, counts[k]);
    batches_.push_back(counts);
    refresh();
    return estimates_unlocked();
  }

  nlohmann::json snapshot() const {
    std::shared_lock lock(mu_);
    return snapshot_unlocked();
  }

  nlohmann::json estimates() const {
    std::shared_lock lock(mu_);
    return estimates_unlocked();
  }

  std::string state_hash() const {
    std::shared_lock lock(mu_);
    return hash_unlocked();
  }

  /// batch_allocate on the current state. Never mutates the session.
  nlohmann::json recommend(std::int64_t b, const TargetOverrides& overrides = {}) const {
    std::shared_lock lock(mu_);
    return recommend_unlocked(b, overrides);
  }

  nlohmann::json whatif(std::int64_t b, const TargetOverrides& overrides) const {
    std::shared_lock lock(mu_);
    return {{"current", recommend_unlocked(b, {})}, {"hypothetical", recommend_unlocked(b, overrides)}};
  }

  /// Rebuilds a session from a snapshot by replaying its batch log, and checks
  /// the recorded state hash when present.
  static std::unique_ptr<Session> restore(const nlohmann::json& snap) {
    const std::string id = snap.value("id", std::string("restored"));
    if (!snap.contains("definition")) throw InvalidInput("snapshot lacks 'definition'", "definition");
    auto s = std::make_unique<Session>(id, definition_from_json(snap.at("definition")));
    if (snap.contains("batches")) {
      for (const auto& b : snap.at("batches")) {
        s->record_batch(detail::get_field<BatchCounts>(nlohmann::json{{"counts", b}}, "counts", "batches"));
      }
    }
    if (snap.contains("state_hash") && snap.at("state_hash").get<std::string>() != s->state_hash()) {
      throw InvalidInput("snapshot state hash does not match its replayed batch log", "state_hash");
    }
    return s;
  }

 private:
  std::int64_t total() const { return state_.total_samples(); }

  void refresh() {
    const auto schedule = def_.schedule();
    const double delta_n = schedule.at(std::min(total() + 1, def_.budget));
    for (std::size_t k = 0; k < def_.arms(); ++k) refresh_arm_intervals(intervals_, state_, k, delta_n);
  }

  std::vector<double> bounds() const {
    const double vacuous = 1.0 - 1.0 / static_cast<double>(def_.symbols);
    std::vector<double> u;
    for (std::size_t k = 0; k < def_.arms(); ++k) {
      try {
        u.push_back(variance_ucb(intervals_, k).value);
      } catch (const Infeasible&) {
        u.push_back(vacuous);
      }
    }
    return u;
  }

  nlohmann::json state_unlocked() const {
    nlohmann::json j;
    j["definition"] = to_json(def_);
    j["batches"] = batches_;
    j["total_samples"] = total();
    j["remaining_budget"] = def_.budget - total();
    nlohmann::json alpha = nlohmann::json::array();
    nlohmann::json intervals = nlohmann::json::array();
    for (std::size_t k = 0; k < def_.arms(); ++k) {
      alpha.push_back(std::vector<double>(state_.alpha(k).begin(), state_.alpha(k).end()));
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t l = 0; l < def_.symbols; ++l) row.push_back({intervals_.at(k, l).lower, intervals_.at(k, l).upper});
      intervals.push_back(std::move(row));
    }
    j["alpha"] = std::move(alpha);
    j["counts"] = state_.counts();
    j["intervals"] = std::move(intervals);
    j["empty_intersections"] = intervals_.empty_intersections();
    return j;
  }

  std::string hash_unlocked() const { return detail::hex64(detail::fnv1a64(state_unlocked().dump())); }

  nlohmann::json snapshot_unlocked() const {
    auto j = state_unlocked();
    j["state_hash"] = detail::hex64(detail::fnv1a64(j.dump()));
    j["id"] = id_;
    return j;
  }

  nlohmann::json estimates_unlocked() const {
    const std::size_t L = def_.symbols;
    const auto u = bounds();
    nlohmann::json j;
    j["id"] = id_;
    j["total_samples"] = total();
    j["remaining_budget"] = def_.budget - total();
    j["categories"] = nlohmann::json::array();
    double r_hat = 0.0;
    double r_post = 0.0;
    double overall_mse = 0.0;
    bool all_sampled = true;
    for (std::size_t k = 0; k < def_.arms(); ++k) {
      const auto& c = def_.categories[k];
      nlohmann::json cj;
      cj["name"] = c.name;
      cj["weight"] = c.weight;
      cj["samples"] = state_.count(k);
      std::vector<std::int64_t> counts;
      std::vector<double> mean;
      for (std::size_t l = 0; l < L; ++l) {
        counts.push_back(state_.observed(k, l));
        mean.push_back(state_.posterior_mean(k, l));
      }
      cj["counts"] = counts;
      cj["posterior_mean"] = mean;
      if (state_.count(k) > 0) {
        const auto emp = state_.empirical_pmf(k);
        cj["empirical"] = emp;
        if (L == 2) {
          r_hat += c.weight * emp[1];
          overall_mse += c.weight * c.weight * tracking_parameter(emp) / static_cast<double>(state_.count(k));
        }
      } else {
        cj["empirical"] = nullptr;
        all_sampled = false;
      }
      nlohmann::json iv = nlohmann::json::array();
      for (std::size_t l = 0; l < L; ++l) iv.push_back({intervals_.at(k, l).lower, intervals_.at(k, l).upper});
      cj["intervals"] = std::move(iv);
      cj["u"] = u[k];
      if (L == 2) r_post += c.weight * mean[1];
      j["categories"].push_back(std::move(cj));
    }
    if (L == 2) {
      j["overall"] = {{"positivity", all_sampled ? nlohmann::json(r_hat) : nlohmann::json(nullptr)},
                      {"posterior_positivity", r_post},
                      {"mse", all_sampled ? nlohmann::json(overall_mse) : nlohmann::json(nullptr)}};
    } else {
      j["overall"] = nullptr;
    }
    j["state_hash"] = hash_unlocked();
    return j;
  }

  nlohmann::json recommend_unlocked(std::int64_t b, const TargetOverrides& overrides) const {
    if (b < 1) throw InvalidInput("batch size must be a positive integer", "b");
    const std::int64_t remaining = def_.budget - total();
    if (remaining == 0) throw InvalidInput("the session budget is exhausted", "b");
    const std::size_t K = def_.arms();
    BatchConstraintSpec spec;
    spec.weights = def_.weights();
    spec.theta = overrides.theta.value_or(def_.thetas());
    spec.theta_overall = overrides.theta_overall.value_or(def_.theta_overall);
    spec.batch = std::min(b, remaining);
    if (spec.theta.size() != K) throw InvalidInput("theta must have one entry per category", "theta");
    spec.validate(K);
    const auto u = bounds();
    const auto alloc = batch_allocate(u, state_.counts(), spec);
    nlohmann::json j;
    j["requested_batch"] = b;
    j["batch"] = spec.batch;
    j["tau"] = alloc.rounded;
    j["tau_real"] = alloc.real;
    j["lambda"] = alloc.lambda;
    j["rounded_lambda"] = alloc.rounded_lambda;
    j["u"] = u;
    j["T"] = state_.counts();
    nlohmann::json theta = nlohmann::json::array();
    for (double t : spec.theta) theta.push_back(detail::finite_or_null(t));
    j["theta"] = std::move(theta);
    j["theta_overall"] = detail::finite_or_null(spec.theta_overall);
    j["arm_binding"] = alloc.arm_binding;
    j["overall_binding"] = alloc.overall_binding;
    nlohmann::json names = nlohmann::json::array();
    for (const auto& c : def_.categories) names.push_back(c.name);
    j["categories"] = std::move(names);
    j["state_hash"] = hash_unlocked();
    return j;
  }

  std::string id_;
  SessionDefinition def_;
  PosteriorState state_;
  IntervalSet intervals_;
  std::vector<BatchCounts> batches_;
  mutable std::shared_mutex mu_;
};

/// All sessions of one service instance, optionally persisted to a journal.
class SessionStore {
 public:
  explicit SessionStore(std::optional<std::string> journal_path = std::nullopt) : path_(std::move(journal_path)) {
    if (!path_) return;
    replay(*path_);
    journal_.open(*path_, std::ios::app);
    if (!journal_) throw InvalidInput("cannot open journal '" + *path_ + "' for appending", "journal");
  }

  std::shared_ptr<Session> create(const SessionDefinition& def) {
    std::unique_lock lock(mu_);
    const std::string id = "s" + std::to_string(next_id_);
    auto session = std::make_shared<Session>(id, def);
    append({{"event", "create"}, {"id", id}, {"definition", to_json(session->definition())}});
    ++next_id_;
    sessions_.emplace(id, session);
    return session;
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("no session with id '" + id + "'");
    return it->second;
  }

  nlohmann::json record_batch(const std::string& id, const BatchCounts& counts) {
    auto session = find(id);
    return session->record_batch(counts, [&] { append({{"event", "batch"}, {"id", id}, {"counts", counts}}); });
  }

  std::vector<std::string> ids() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return sessions_.size();
  }

 private:
  void append(const nlohmann::json& event) {
    if (!path_) return;
    std::lock_guard lock(journal_mu_);
    journal_ << event.dump() << '\n';
    journal_.flush();
    if (!journal_) throw Error("failed to append to the journal");
  }

  void replay(const std::string& path) {
    std::ifstream in(path);
    if (!in) return;
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) lines.push_back(line);
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      nlohmann::json ev;
      try {
        ev = nlohmann::json::parse(lines[i]);
      } catch (const nlohmann::json::exception&) {
        if (i + 1 == lines.size()) {
          log::warn("ignoring incomplete trailing journal line " + std::to_string(i + 1));
          break;
        }
        throw InvalidInput("corrupt journal line " + std::to_string(i + 1), "journal");
      }
      const auto type = ev.value("event", std::string());
      const auto id = ev.value("id", std::string());
      if (type == "create") {
        sessions_.emplace(id, std::make_shared<Session>(id, definition_from_json(ev.at("definition"))));
        if (id.size() > 1 && id[0] == 's') next_id_ = std::max(next_id_, std::stoll(id.substr(1)) + 1);
      } else if (type == "batch") {
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw InvalidInput("journal batch for unknown session '" + id + "'", "journal");
        it->second->record_batch(ev.at("counts").get<BatchCounts>());
      } else {
        throw InvalidInput("unknown journal event on line " + std::to_string(i + 1), "journal");
      }
    }
    log::info("replayed " + std::to_string(lines.size()) + " journal events from " + path);
  }

  std::optional<std::string> path_;
  std::ofstream journal_;
  std::mutex journal_mu_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  long long next_id_ = 1;
};

// ---------------------------------------------------------------------------
// HTTP

class ApiServer {
 public:
  explicit ApiServer(SessionStore& store, std::optional<std::string> token = std::nullopt)
      : store_(store), token_(std::move(token)) {
    routes();
  }

  httplib::Server& http() { return server_; }
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void send(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, int status, const std::string& code, const std::string& message,
                   const std::string& field = "") {
    nlohmann::json body{{"code", code}, {"message", message}};
    if (!field.empty()) body["field"] = field;
    send(res, status, body);
  }

  template <class F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const NotFound& e) {
      fail(res, 404, "not_found", e.what());
    } catch (const InvalidInput& e) {
      fail(res, 422, "invalid_input", e.what(), e.field());
    } catch (const UnsupportedConfiguration& e) {
      fail(res, 422, "unsupported_configuration", e.what());
    } catch (const NumericalDegeneracy& e) {
      fail(res, 422, "numerical_degeneracy", e.what());
    } catch (const nlohmann::json::exception& e) {
      fail(res, 400, "malformed_json", e.what());
    } catch (const std::exception& e) {
      log::error(std::string("internal error: ") + e.what());
      fail(res, 500, "internal", e.what());
    }
  }

  static nlohmann::json body_of(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    return nlohmann::json::parse(req.body);
  }

  static std::int64_t batch_param(const std::string& raw) {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(raw, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (raw.empty() || pos != raw.size() || v < 1) throw InvalidInput("b must be a positive integer", "b");
    return v;
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Headers", "Content-Type, Authorization"}});
    server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      log::debug(req.method + " " + req.path);
      if (!token_ || req.path == "/healthz" || req.method == "OPTIONS") return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") != "Bearer " + *token_) {
        fail(res, 401, "unauthorized", "missing or invalid bearer token");
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"status", "ok"}, {"sessions", store_.size()}});
    });
    server_.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"sessions", store_.ids()}});
    });
    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto s = store_.create(definition_from_json(body_of(req)));
        send(res, 201, {{"id", s->id()}, {"session", s->snapshot()}});
      });
    });
    server_.Get("/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, store_.find(req.path_params.at("id"))->snapshot()); });
    });
    server_.Get("/sessions/:id/estimates", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, store_.find(req.path_params.at("id"))->estimates()); });
    });
    server_.Post("/sessions/:id/batches", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto& id = req.path_params.at("id");
        const auto& def = store_.find(id)->definition();
        send(res, 200, store_.record_batch(id, batch_from_json(body_of(req), def.arms(), def.symbols)));
      });
    });
    server_.Get("/sessions/:id/recommendation", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto s = store_.find(req.path_params.at("id"));
        if (!req.has_param("b")) throw InvalidInput("query parameter b is required", "b");
        send(res, 200, s->recommend(batch_param(req.get_param_value("b"))));
      });
    });
    server_.Post("/sessions/:id/whatif", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto s = store_.find(req.path_params.at("id"));
        const auto body = body_of(req);
        if (!body.contains("b") || !body.at("b").is_number_integer()) {
          throw InvalidInput("b must be a positive integer", "b");
        }
        send(res, 200, s->whatif(body.at("b").get<std::int64_t>(), overrides_from_json(body, s->definition().arms())));
      });
    });
  }

  SessionStore& store_;
  std::optional<std::string> token_;
  httplib::Server server_;
};

}  // namespace aps
