#pragma once

// Multi-class M/G/1 head-of-line priority queue quantities for a vehicle's
// upload queue, plus a discrete-event simulator used as an independent
// oracle in property tests.
//
// Priority semantics: a larger `priority` value is served first.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcps/rng.hpp"

namespace vcps::queueing {

struct QueueClass {
  double arrival_rate = 0.0;      // lambda, Hz
  double mean_service = 0.0;      // alpha, s
  double service_variance = 0.0;  // beta, s^2
  int priority = 0;
};

class UnstableQueue : public std::domain_error {
 public:
  UnstableQueue(std::size_t cls, const std::string& what)
      : std::domain_error("class " + std::to_string(cls) + ": " + what), cls_(cls) {}
  std::size_t class_index() const { return cls_; }

 private:
  std::size_t cls_;
};

inline double interarrival_time(double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("arrival rate must be positive");
  return 1.0 / rate;
}

/// rho = sum of lambda * alpha.
inline double workload(std::span<const QueueClass> classes) {
  double rho = 0.0;
  for (const auto& c : classes) rho += c.arrival_rate * c.mean_service;
  return rho;
}

/// Workload of the classes strictly ahead of `target` in priority.
inline double workload_ahead(std::span<const QueueClass> classes, std::size_t target) {
  const int p = classes[target].priority;
  double rho = 0.0;
  for (const auto& c : classes)
    if (c.priority > p) rho += c.arrival_rate * c.mean_service;
  return rho;
}

/// Mean queuing time of `target`:
///   q = [alpha + (lambda*beta + sum_ahead lambda*beta) / (2(1 - rho_ahead - lambda*alpha))] / (1 - rho_ahead) - alpha
/// with beta the service-time variance.
inline double queuing_time(std::span<const QueueClass> classes, std::size_t target) {
  if (target >= classes.size()) throw std::out_of_range("queue class index out of range");
  const auto& c = classes[target];
  const double ahead = workload_ahead(classes, target);
  double spread = c.arrival_rate * c.service_variance;
  for (const auto& o : classes)
    if (o.priority > c.priority) spread += o.arrival_rate * o.service_variance;
  const double outer = 1.0 - ahead;
  const double inner = 1.0 - ahead - c.arrival_rate * c.mean_service;
  if (!(outer > 0.0)) throw UnstableQueue(target, "higher-priority workload reaches 1");
  if (!(inner > 0.0)) throw UnstableQueue(target, "workload through this class reaches 1");
  return (c.mean_service + spread / (2.0 * inner)) / outer - c.mean_service;
}

enum class ServiceLaw { gamma, exponential, deterministic };

struct OracleResult {
  std::vector<double> mean_wait;
  std::vector<double> std_error;
  std::vector<std::size_t> served;
};

namespace detail {

class ServiceSampler {
 public:
  ServiceSampler(const QueueClass& c, ServiceLaw law) : mean_(c.mean_service) {
    if (law == ServiceLaw::exponential) {
      kind_ = Kind::exponential;
      exp_ = std::exponential_distribution<double>(1.0 / c.mean_service);
    } else if (law == ServiceLaw::deterministic || c.service_variance <= 0.0) {
      kind_ = Kind::constant;
    } else {
      kind_ = Kind::gamma;
      const double shape = c.mean_service * c.mean_service / c.service_variance;
      const double scale = c.service_variance / c.mean_service;
      gamma_ = std::gamma_distribution<double>(shape, scale);
    }
  }
  double operator()(Rng& rng) {
    switch (kind_) {
      case Kind::exponential: return exp_(rng);
      case Kind::gamma: return gamma_(rng);
      case Kind::constant: break;
    }
    return mean_;
  }

 private:
  enum class Kind { constant, exponential, gamma };
  Kind kind_ = Kind::constant;
  double mean_;
  std::exponential_distribution<double> exp_;
  std::gamma_distribution<double> gamma_;
};

}  // namespace detail

/// Non-preemptive priority M/G/1 simulation over `n_arrivals` Poisson
/// arrivals (all classes merged). Returns each class's empirical mean wait
/// in queue and a batch-means standard error (20 batches per class).
inline OracleResult des_oracle(std::span<const QueueClass> classes, std::size_t n_arrivals, std::uint64_t seed,
                               ServiceLaw law = ServiceLaw::gamma) {
  const std::size_t k = classes.size();
  if (k == 0) throw std::invalid_argument("des_oracle needs at least one class");
  double total_rate = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(classes[i].arrival_rate > 0.0)) throw std::invalid_argument("arrival rates must be positive");
    if (!(classes[i].mean_service > 0.0)) throw std::invalid_argument("mean service must be positive");
    total_rate += classes[i].arrival_rate;
  }
  if (!(workload(classes) < 1.0)) throw UnstableQueue(0, "total workload must be below 1");

  Rng rng = make_stream(seed, Stream::oracle);
  std::exponential_distribution<double> gap(total_rate);
  std::vector<double> weights;
  for (const auto& c : classes) weights.push_back(c.arrival_rate);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<detail::ServiceSampler> service;
  for (const auto& c : classes) service.emplace_back(c, law);

  // Queue order: index 0 is served first.
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return classes[a].priority > classes[b].priority; });

  std::vector<std::vector<double>> waits(k);
  std::vector<std::deque<double>> queues(k);
  double clock_arrival = gap(rng);
  double server_free = 0.0;
  std::size_t arrived = 0;
  std::size_t queued = 0;

  auto start_next = [&]() {
    for (std::size_t idx : order) {
      if (queues[idx].empty()) continue;
      const double a = queues[idx].front();
      queues[idx].pop_front();
      --queued;
      waits[idx].push_back(server_free - a);
      server_free += service[idx](rng);
      return;
    }
  };

  while (arrived < n_arrivals || queued > 0) {
    if (queued > 0 && (arrived >= n_arrivals || server_free <= clock_arrival)) {
      start_next();
      continue;
    }
    const std::size_t cls = pick(rng);
    const double t = clock_arrival;
    if (queued == 0 && server_free <= t) {
      waits[cls].push_back(0.0);
      server_free = t + service[cls](rng);
    } else {
      queues[cls].push_back(t);
      ++queued;
    }
    ++arrived;
    clock_arrival = t + gap(rng);
  }

  OracleResult out;
  constexpr std::size_t batches = 20;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& w = waits[i];
    out.served.push_back(w.size());
    double sum = 0.0;
    for (double x : w) sum += x;
    const double mean = w.empty() ? 0.0 : sum / static_cast<double>(w.size());
    out.mean_wait.push_back(mean);
    if (w.size() < 2 * batches) {
      out.std_error.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    const std::size_t per = w.size() / batches;
    std::vector<double> means(batches, 0.0);
    double grand = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t j = b * per; j < (b + 1) * per; ++j) means[b] += w[j];
      means[b] /= static_cast<double>(per);
      grand += means[b] / static_cast<double>(batches);
    }
    double ss = 0.0;
    for (double bm : means) ss += (bm - grand) * (bm - grand);
    out.std_error.push_back(std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches)));
  }
  return out;
}

}  // namespace vcps::queueing
