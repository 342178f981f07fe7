#include "vqoe/flowsim.hpp"

#include <algorithm>
#include <cmath>

#include "vqoe/error.hpp"

namespace vqoe::flowsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double exp_draw(Rng& rng, double rate) { return -std::log(uniform_open(rng)) / rate; }

double draw_duration(Rng& rng, const DurationModel& m, int klass, double viewing) {
  const double lo = m.omega_min(klass);
  const double omega = 1.0 - (1.0 - lo) * (1.0 - uniform_open(rng));  // (lo, 1]
  return viewing / omega;
}

// Next synthetic view; shared by the simulator and generate_workload so
// both produce the same stream for the same seed.
struct Draw {
  double gap, viewing, duration;
  int klass;
};

Draw draw_view(Rng& rng, double lambda, double p1, double theta1, double theta2,
               const DurationModel* durations) {
  Draw d{};
  d.gap = exp_draw(rng, lambda);
  d.klass = uniform_open(rng) < p1 ? 1 : 2;
  d.viewing = exp_draw(rng, d.klass == 1 ? theta1 : theta2);
  d.duration = durations ? draw_duration(rng, *durations, d.klass, d.viewing) : kInf;
  return d;
}

void add_into(std::vector<long>& dst, const std::vector<long>& src) {
  if (dst.size() < src.size()) dst.resize(src.size(), 0);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  if (dst.size() < src.size()) dst.resize(src.size(), 0.0);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::basic: return "basic";
    case Mode::pd: return "pd";
    case Mode::pd_finite_duration: return "pd_finite_duration";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "basic") return Mode::basic;
  if (s == "pd") return Mode::pd;
  if (s == "pd_finite_duration") return Mode::pd_finite_duration;
  throw DomainError("unknown simulation mode '" + s + "'");
}

const char* policy_name(RebufferPolicy p) {
  return p == RebufferPolicy::rebuffer_to_qa ? "rebuffer_to_qa" : "stop_at_first";
}

RebufferPolicy parse_policy(const std::string& s) {
  if (s == "rebuffer_to_qa") return RebufferPolicy::rebuffer_to_qa;
  if (s == "stop_at_first") return RebufferPolicy::stop_at_first;
  throw DomainError("unknown rebuffer policy '" + s + "'");
}

void DurationModel::validate() const {
  for (double w : {omega_min1, omega_min2})
    if (!(w > 0.0 && w <= 1.0)) throw DomainError("omega_min must lie in (0, 1]");
}

void SimConfig::validate() const {
  system.validate();
  durations.validate();
  if (target_flows <= 0 && horizon_s <= 0.0 && !trace)
    throw DomainError("simulation needs target_flows > 0, a horizon or a trace");
  if (warmup_flows < 0) throw DomainError("warmup_flows must be >= 0");
  if (horizon_s < 0.0) throw DomainError("horizon must be >= 0");
  if (!trace && system.lambda() <= 0.0) throw DomainError("Poisson arrivals need lambda > 0");
  if (trace) {
    double last = -kInf;
    for (std::size_t n = 0; n < trace->size(); ++n) {
      const auto& r = (*trace)[n];
      if (r.arrival_ts < last) throw DomainError("trace arrivals must be sorted by time");
      last = r.arrival_ts;
      if (mode == Mode::pd_finite_duration && !r.duration)
        throw DomainError("finite-duration mode needs a duration on every trace record (record " +
                          std::to_string(n + 1) + ")");
    }
  }
}

double ClassStats::starvation_fraction() const {
  return accepted > 0 ? static_cast<double>(starved) / static_cast<double>(accepted) : 0.0;
}

double ClassStats::mean_dtvt() const {
  return accepted > 0 ? dtvt_sum / static_cast<double>(accepted) : 0.0;
}

double ClassStats::starvation_stderr() const {
  if (accepted == 0) return 0.0;
  const double p = starvation_fraction();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(accepted));
}

double SimReport::rejection_fraction() const {
  const long offered = classes[0].offered() + classes[1].offered();
  const long rejected = classes[0].rejected + classes[1].rejected;
  return offered > 0 ? static_cast<double>(rejected) / static_cast<double>(offered) : 0.0;
}

markov::Vector SimReport::occupancy() const {
  markov::Vector v = Eigen::Map<const markov::Vector>(occupancy_time.data(),
                                                      static_cast<Eigen::Index>(occupancy_time.size()));
  const double total = v.sum();
  return total > 0.0 ? markov::Vector(v / total) : v;
}

markov::Vector SimReport::arrival_distribution() const {
  markov::Vector v(static_cast<Eigen::Index>(arrival_states.size()));
  for (std::size_t i = 0; i < arrival_states.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = static_cast<double>(arrival_states[i]);
  const double total = v.sum();
  return total > 0.0 ? markov::Vector(v / total) : v;
}

SimReport merge(const std::vector<SimReport>& reports) {
  SimReport out;
  if (reports.empty()) return out;
  out.max_flows = reports.front().max_flows;
  for (const auto& r : reports) {
    if (r.max_flows != out.max_flows) throw DomainError("cannot merge reports with different K");
    for (int k = 0; k < 2; ++k) {
      auto& c = out.classes[k];
      const auto& s = r.classes[k];
      c.accepted += s.accepted;
      c.rejected += s.rejected;
      c.starved += s.starved;
      c.dtvt_sum += s.dtvt_sum;
      c.dtvt_sq_sum += s.dtvt_sq_sum;
      add_into(c.starvation_histogram, s.starvation_histogram);
      auto& b = out.by_start[k];
      const auto& t = r.by_start[k];
      add_into(b.count, t.count);
      add_into(b.starved, t.starved);
      add_into(b.dtvt_sum, t.dtvt_sum);
      if (b.startup.size() < t.startup.size()) b.startup.resize(t.startup.size());
      for (std::size_t l = 0; l < t.startup.size(); ++l) add_into(b.startup[l], t.startup[l]);
    }
    add_into(out.occupancy_time, r.occupancy_time);
    add_into(out.arrival_states, r.arrival_states);
    out.measured_time += r.measured_time;
    out.events += r.events;
    out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
    out.flows.insert(out.flows.end(), r.flows.begin(), r.flows.end());
  }
  return out;
}

SimReport run(const SimConfig& cfg) {
  Simulator sim(cfg);
  sim.run_to_end();
  return sim.report();
}

SimReport run_replicas(const SimConfig& cfg, int replicas) {
  if (replicas < 1) throw DomainError("replicas must be >= 1");
  std::vector<SimReport> parts;
  parts.reserve(static_cast<std::size_t>(replicas));
  for (int r = 0; r < replicas; ++r) {
    SimConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(r);
    parts.push_back(run(c));
  }
  return merge(parts);
}

int assign_class(double viewing_time, const workload::HyperExpParams& params, Rng& rng) {
  const double gamma = workload::class1_posterior(viewing_time, params);
  return uniform_open(rng) < gamma ? 1 : 2;
}

std::vector<ViewRecord> generate_workload(const workload::HyperExpParams& params, double lambda,
                                          double p1, double horizon_s, std::uint64_t seed,
                                          const std::optional<DurationModel>& durations) {
  if (!(lambda > 0.0)) throw DomainError("arrival rate must be > 0");
  if (p1 < 0.0 || p1 > 1.0) throw DomainError("class-1 fraction must lie in [0, 1]");
  if (!(horizon_s > 0.0)) throw DomainError("horizon must be > 0");
  if (!(params.theta1 > 0.0) || !(params.theta2 > 0.0)) throw DomainError("rates must be > 0");
  if (durations) durations->validate();
  Rng rng(seed);
  std::vector<ViewRecord> out;
  double t = 0.0;
  for (;;) {
    const Draw d = draw_view(rng, lambda, p1, params.theta1, params.theta2,
                             durations ? &*durations : nullptr);
    t += d.gap;
    if (t > horizon_s) break;
    ViewRecord r{t, d.viewing, std::nullopt, d.klass};
    if (durations) r.duration = d.duration;
    out.push_back(r);
  }
  return out;
}

Simulator::Simulator(SimConfig cfg)
    : cfg_(std::move(cfg)),
      rng_(cfg_.seed),
      ext_(cfg_.system.max_flows, true),
      space_(cfg_.system.max_flows) {
  cfg_.validate();
  const auto& s = cfg_.system;
  class_model_ = {s.lambda() > 0.0 ? s.p1() : 0.5, s.theta1, s.theta2};
  report_.max_flows = s.max_flows;
  report_.occupancy_time.assign(static_cast<std::size_t>(ext_.size()), 0.0);
  report_.arrival_states.assign(static_cast<std::size_t>(ext_.size()), 0);
  const auto n = static_cast<std::size_t>(space_.size());
  for (auto& b : report_.by_start) {
    b.count.assign(n, 0);
    b.starved.assign(n, 0);
    b.dtvt_sum.assign(n, 0.0);
    b.startup.assign(n, std::vector<long>(n, 0));
  }
  measuring_ = cfg_.warmup_flows == 0;
}

double Simulator::download_rate(const Flow& f) const {
  if (!f.downloading() || weight_sum_ <= 0.0) return 0.0;
  return cfg_.system.capacity_bps / cfg_.system.bitrate_bps * f.weight / weight_sum_;
}

double Simulator::playback_rate(const Flow& f) const {
  switch (f.phase) {
    case Phase::playing: return 1.0;
    case Phase::drained: return std::min(1.0, download_rate(f));
    default: return 0.0;
  }
}

void Simulator::recompute_weights() {
  weight_sum_ = 0.0;
  for (const auto& f : active_)
    if (f.downloading()) weight_sum_ += f.weight;
}

markov::State Simulator::others(int klass) const {
  markov::State s{0, 0};
  for (const auto& f : active_) (f.klass == 1 ? s.i : s.j) += 1;
  (klass == 1 ? s.i : s.j) -= 1;
  return s;
}

bool Simulator::next_arrival(Arrival& out) {
  if (pending_) {
    out = *pending_;
    return true;
  }
  if (source_exhausted_) return false;
  if (cfg_.trace) {
    if (trace_pos_ >= cfg_.trace->size()) {
      source_exhausted_ = true;
      return false;
    }
    const auto& r = (*cfg_.trace)[trace_pos_++];
    const int k = r.klass ? *r.klass : assign_class(r.viewing_time, class_model_, rng_);
    pending_ = Arrival{r.arrival_ts, r.viewing_time, r.duration ? *r.duration : kInf, k};
  } else {
    const auto& s = cfg_.system;
    const bool with_durations = cfg_.mode == Mode::pd_finite_duration;
    const Draw d = draw_view(rng_, s.lambda(), s.p1(), s.theta1, s.theta2,
                             with_durations ? &cfg_.durations : nullptr);
    pending_ = Arrival{now_ + d.gap, d.viewing, d.duration, d.klass};
  }
  out = *pending_;
  return true;
}

void Simulator::admit(const Arrival& a) {
  const auto& s = cfg_.system;
  ++arrivals_seen_;
  const bool window_open = arrivals_seen_ > cfg_.warmup_flows &&
                           (cfg_.target_flows <= 0 || measured_accepted_ < cfg_.target_flows) &&
                           (cfg_.horizon_s <= 0.0 || a.ts <= cfg_.horizon_s);
  if (arrivals_seen_ > cfg_.warmup_flows) measuring_ = window_open;

  int n1 = 0, n2 = 0;
  for (const auto& f : active_) (f.klass == 1 ? n1 : n2) += 1;
  if (window_open) ++report_.arrival_states[static_cast<std::size_t>(ext_.index(n1, n2))];

  if (n1 + n2 >= s.max_flows) {
    if (window_open) ++report_.classes[a.klass - 1].rejected;
    return;
  }
  Flow f;
  f.id = next_id_++;
  f.klass = a.klass;
  f.weight = s.phi(a.klass);
  f.viewing_time = a.viewing_time;
  f.video_duration = a.duration;
  f.demand = cfg_.mode == Mode::basic ? a.viewing_time : a.duration;
  f.admit_ts = now_;
  f.start_state = {n1, n2};
  f.events = 1;
  if (s.startup_threshold <= 0.0) {
    f.phase = Phase::playing;
    f.startup_end = f.start_state;
  }
  if (window_open) {
    f.counted = true;
    ++measured_accepted_;
    ++measured_live_;
    if (cfg_.target_flows > 0 && measured_accepted_ >= cfg_.target_flows) measuring_ = false;
  }
  active_.push_back(f);
  recompute_weights();
}

void Simulator::depart(std::size_t idx) {
  Flow f = active_[idx];
  active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(idx));
  recompute_weights();
  f.phase = Phase::departed;
  f.depart_ts = now_;
  ++f.events;
  if (!f.counted) return;
  --measured_live_;
  auto& c = report_.classes[f.klass - 1];
  ++c.accepted;
  if (f.starvations > 0) ++c.starved;
  const auto hist = static_cast<std::size_t>(f.starvations);
  if (c.starvation_histogram.size() <= hist) c.starvation_histogram.resize(hist + 1, 0);
  ++c.starvation_histogram[hist];
  const double dtvt = f.viewing_time > 0.0 ? (f.depart_ts - f.admit_ts) / f.viewing_time : 0.0;
  c.dtvt_sum += dtvt;
  c.dtvt_sq_sum += dtvt * dtvt;
  auto& b = report_.by_start[f.klass - 1];
  const auto l = static_cast<std::size_t>(space_.index(f.start_state.i, f.start_state.j));
  ++b.count[l];
  if (f.starvations > 0) ++b.starved[l];
  b.dtvt_sum[l] += dtvt;
  if (f.startup_end)
    ++b.startup[l][static_cast<std::size_t>(space_.index(f.startup_end->i, f.startup_end->j))];
  if (cfg_.record_flows) report_.flows.push_back(f);
}

void Simulator::advance(double dt) {
  if (dt <= 0.0) return;
  if (measuring_) {
    int n1 = 0, n2 = 0;
    for (const auto& f : active_) (f.klass == 1 ? n1 : n2) += 1;
    report_.occupancy_time[static_cast<std::size_t>(ext_.index(n1, n2))] += dt;
    report_.measured_time += dt;
  }
  for (auto& f : active_) {
    const double r = download_rate(f);
    const double p = playback_rate(f);
    f.downloaded = std::min(f.demand, f.downloaded + r * dt);
    f.played = std::min(f.downloaded, f.played + p * dt);
  }
  now_ += dt;
}

bool Simulator::step() {
  if (finished_) return false;
  const double q_a = cfg_.system.startup_threshold;
  const bool pd = cfg_.mode != Mode::basic;

  for (auto& f : active_)
    if (f.phase == Phase::drained && download_rate(f) > 1.0) f.phase = Phase::playing;

  double best = kInf;
  EventKind kind = EventKind::none;
  std::size_t who = 0;
  bool full_download = false;
  auto consider = [&](double dt, EventKind k, std::size_t idx, bool is_download) {
    if (!std::isfinite(dt)) return;
    dt = std::max(dt, 0.0);
    const double tol = 1e-12 * std::max(1.0, best);
    if (kind == EventKind::none || dt < best - tol) {
      best = dt;
    } else if (dt <= best + tol && k < kind) {
      best = std::min(best, dt);
    } else {
      return;
    }
    kind = k;
    who = idx;
    full_download = is_download;
  };

  for (std::size_t n = 0; n < active_.size(); ++n) {
    const Flow& f = active_[n];
    const double r = download_rate(f);
    if (r > 0.0) consider((f.demand - f.downloaded) / r, EventKind::departure, n, true);
    if (pd) {
      const double p = playback_rate(f);
      if (p > 0.0) consider((f.viewing_time - f.played) / p, EventKind::departure, n, false);
    }
    switch (f.phase) {
      case Phase::startup:
      case Phase::rebuffering:
        if (r > 0.0) consider((q_a - f.buffer()) / r, EventKind::startup_complete, n, false);
        break;
      case Phase::playing:
        if (r < 1.0) consider(f.buffer() / (1.0 - r), EventKind::buffer_empty, n, false);
        break;
      default:
        break;
    }
  }
  Arrival a{};
  const bool have_arrival = next_arrival(a);
  if (have_arrival) consider(a.ts - now_, EventKind::arrival, 0, false);

  if (kind == EventKind::none) {
    finished_ = true;
    if (cfg_.trace && cfg_.target_flows > 0 && measured_accepted_ < cfg_.target_flows)
      report_.warnings.push_back("trace exhausted after " + std::to_string(measured_accepted_) +
                                 " measured flows");
    return false;
  }

  advance(best);
  ++report_.events;
  switch (kind) {
    case EventKind::departure: {
      Flow& f = active_[who];
      if (full_download) f.downloaded = f.demand;
      else f.played = f.viewing_time;
      depart(who);
      break;
    }
    case EventKind::buffer_empty: {
      Flow& f = active_[who];
      f.played = f.downloaded;
      ++f.events;
      if (cfg_.rebuffer_policy == RebufferPolicy::stop_at_first) {
        f.starvations = std::max(f.starvations, 1);
        f.phase = Phase::drained;
      } else {
        ++f.starvations;
        f.phase = q_a > 0.0 ? Phase::rebuffering : Phase::drained;
      }
      break;
    }
    case EventKind::startup_complete: {
      Flow& f = active_[who];
      f.downloaded = std::min(f.demand, f.played + q_a);
      ++f.events;
      if (f.phase == Phase::startup) f.startup_end = others(f.klass);
      f.phase = Phase::playing;
      break;
    }
    case EventKind::arrival:
      pending_.reset();
      admit(a);
      break;
    case EventKind::none:
      break;
  }

  const bool window_closed =
      arrivals_seen_ > cfg_.warmup_flows &&
      ((cfg_.target_flows > 0 && measured_accepted_ >= cfg_.target_flows) ||
       (cfg_.horizon_s > 0.0 && now_ > cfg_.horizon_s));
  if (window_closed) measuring_ = false;
  if (window_closed && measured_live_ == 0) finished_ = true;
  if (cfg_.trace && source_exhausted_ && active_.empty()) {
    finished_ = true;
    if (cfg_.target_flows > 0 && measured_accepted_ < cfg_.target_flows)
      report_.warnings.push_back("trace exhausted after " + std::to_string(measured_accepted_) +
                                 " measured flows");
  }
  return !finished_;
}

void Simulator::run_to_end() {
  while (step()) {
  }
}

}  // namespace vqoe::flowsim
