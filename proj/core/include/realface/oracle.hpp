#pragma once

#include <atomic>
#include <cstddef>

#include "realface/corpus.hpp"
#include "realface/matcher.hpp"

namespace realface {

/// A black-box face recognition system: one probe in, best-match identity and
/// raw score out. Implementations throw OracleUnavailable when the system
/// cannot be reached and may return a NaN score for a transient failure.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual MatchResult query(const FaceVector& probe) = 0;
  virtual Polarity polarity() const = 0;
};

/// In-process oracle over an enrolled gallery. Safe for concurrent queries.
class BuiltinOracle final : public Oracle {
 public:
  BuiltinOracle(const Gallery& gallery, Metric metric) : gallery_(&gallery), metric_(metric) {}

  MatchResult query(const FaceVector& probe) override {
    queries_.fetch_add(1, std::memory_order_relaxed);
    return match(*gallery_, probe, metric_);
  }
  Polarity polarity() const override { return polarity_of(metric_); }

  const Gallery& gallery() const noexcept { return *gallery_; }
  Metric metric() const noexcept { return metric_; }
  std::size_t queries() const noexcept { return queries_.load(std::memory_order_relaxed); }

 private:
  const Gallery* gallery_;
  Metric metric_;
  std::atomic<std::size_t> queries_{0};
};

}  // namespace realface
