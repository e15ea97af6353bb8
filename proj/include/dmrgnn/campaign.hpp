#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "dmrgnn/error.hpp"
#include "dmrgnn/netlist.hpp"
#include "dmrgnn/sim.hpp"
#include "dmrgnn/util.hpp"

namespace dmrgnn {

enum class outcome_class : std::uint8_t { silent, critical, detected, hang };

constexpr std::string_view class_name(outcome_class c) noexcept {
  switch (c) {
    case outcome_class::silent: return "Silent";
    case outcome_class::critical: return "Critical";
    case outcome_class::detected: return "Detected";
    case outcome_class::hang: return "Hang";
  }
  return "?";
}

/// Outcome taxonomy: a wrong done bit is a Hang whatever the outputs; with a
/// correct done, both words right is Silent, both wrong and equal is
/// Critical, anything else is Detected.
constexpr outcome_class classify(const run_result& run, const run_result& gold) noexcept {
  if (!run.done_ok_at_t) return outcome_class::hang;
  if (run.out_a == gold.out_a && run.out_b == gold.out_b) return outcome_class::silent;
  if (run.out_a == run.out_b && run.out_a != gold.out_a) return outcome_class::critical;
  return outcome_class::detected;
}

struct sbf_record {
  std::size_t ff_id = 0;  // cell index
  int cycle = 0;
  outcome_class cls = outcome_class::silent;
  bool done_ok = true;
  std::uint64_t out_a = 0;
  std::uint64_t out_b = 0;
  replica_tag replica = replica_tag::shared;

  bool operator==(const sbf_record&) const = default;
};

/// Outcome counts over a common denominator; rates are exact rationals
/// count/denominator and only become doubles on request.
struct error_rates {
  std::uint64_t critical = 0;
  std::uint64_t detected = 0;
  std::uint64_t hang = 0;
  std::uint64_t silent = 0;
  std::uint64_t denominator = 0;

  [[nodiscard]] double cer() const { return ratio(critical); }
  [[nodiscard]] double der() const { return ratio(detected); }
  [[nodiscard]] double her() const { return ratio(hang); }
  [[nodiscard]] double ser() const { return ratio(silent); }

  void add(outcome_class c, std::uint64_t n = 1) {
    switch (c) {
      case outcome_class::silent: silent += n; break;
      case outcome_class::critical: critical += n; break;
      case outcome_class::detected: detected += n; break;
      case outcome_class::hang: hang += n; break;
    }
    denominator += n;
  }

  bool operator==(const error_rates&) const = default;

 private:
  [[nodiscard]] double ratio(std::uint64_t n) const {
    return denominator == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(denominator);
  }
};

inline std::string rational_string(std::uint64_t num, std::uint64_t den) {
  return std::to_string(num) + "/" + std::to_string(den);
}

struct sbf_campaign {
  run_result gold;
  std::vector<sbf_record> records;  // sorted by (ff_id, cycle)
};

namespace campaign_detail {

/// Runs `batches` work items over `jobs` threads; item i writes only its own
/// output slot, so results do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t batches, int jobs, Fn&& fn) {
  if (jobs <= 1 || batches <= 1) {
    for (std::size_t b = 0; b < batches; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      try {
        for (std::size_t b = next++; b < batches; b = next++) fn(b);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::vector<std::size_t> all_ffs(const module_map& map) {
  std::vector<std::size_t> ffs;
  ffs.insert(ffs.end(), map.ffs_a.begin(), map.ffs_a.end());
  ffs.insert(ffs.end(), map.ffs_b.begin(), map.ffs_b.end());
  ffs.insert(ffs.end(), map.ffs_shared.begin(), map.ffs_shared.end());
  std::sort(ffs.begin(), ffs.end());
  return ffs;
}

}  // namespace campaign_detail

/// Exhaustive single-bit-flip campaign: every flip-flop at every cycle in
/// [0, T], where T is the gold completion time.
inline sbf_campaign run_sbf_campaign(const sim_program& prog, const stimulus& stim, const module_map& map,
                                     int jobs = 1) {
  sbf_campaign result;
  result.gold = run_gold(prog, stim);
  const int t = *result.gold.done_time;
  const auto ffs = campaign_detail::all_ffs(map);
  if (ffs.size() != prog.state_slots())
    throw error(errc::unmatched_instance, "module map covers " + std::to_string(ffs.size()) + " of " +
                                              std::to_string(prog.state_slots()) + " flip-flops");
  const std::size_t per_ff = static_cast<std::size_t>(t) + 1;
  const std::size_t total = ffs.size() * per_ff;
  result.records.resize(total);
  const std::size_t batches = (total + sim_lanes - 1) / sim_lanes;
  campaign_detail::parallel_for(batches, jobs, [&](std::size_t b) {
    const std::size_t first = b * sim_lanes;
    const std::size_t count = std::min(sim_lanes, total - first);
    std::vector<fault_spec> faults(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t idx = first + i;
      faults[i].injections.push_back({ffs[idx / per_ff], static_cast<int>(idx % per_ff)});
    }
    auto runs = run_fault_lanes(prog, stim, faults, t);
    for (std::size_t i = 0; i < count; ++i) {
      auto& rec = result.records[first + i];
      rec.ff_id = faults[i].injections[0].ff;
      rec.cycle = faults[i].injections[0].cycle;
      rec.cls = classify(runs[i], result.gold);
      rec.done_ok = runs[i].done_ok_at_t;
      rec.out_a = runs[i].out_a;
      rec.out_b = runs[i].out_b;
      rec.replica = *map.tag_of(rec.ff_id);
    }
  });
  return result;
}

inline error_rates sbf_rates(std::span<const sbf_record> records) {
  if (records.empty()) throw error(errc::empty_campaign, "no injection records");
  error_rates r;
  for (const auto& rec : records) r.add(rec.cls);
  return r;
}

/// Double-bit-flip rates composed from single-flip records: every pairing of
/// a replica-A record with a replica-B record, no extra simulation. Valid
/// only when the replicas share no state.
inline error_rates derive_dbf(const sbf_campaign& campaign, const module_map& map) {
  if (!map.ffs_shared.empty())
    throw error(errc::shared_state_unsupported, std::to_string(map.ffs_shared.size()) +
                                                     " shared flip-flops; use brute_force_dbf");
  const auto& gold = campaign.gold;
  std::uint64_t n_a = 0, n_b = 0, ok_a = 0, ok_b = 0, good_a = 0, good_b = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> wrong_a, wrong_b;  // erroneous word -> count
  for (const auto& rec : campaign.records) {
    if (rec.replica == replica_tag::a) {
      ++n_a;
      if (!rec.done_ok) continue;
      ++ok_a;
      if (rec.out_a == gold.out_a)
        ++good_a;
      else
        ++wrong_a[rec.out_a];
    } else if (rec.replica == replica_tag::b) {
      ++n_b;
      if (!rec.done_ok) continue;
      ++ok_b;
      if (rec.out_b == gold.out_b)
        ++good_b;
      else
        ++wrong_b[rec.out_b];
    }
  }
  if (n_a == 0 || n_b == 0) throw error(errc::empty_campaign, "derive_dbf needs records in both replicas");
  error_rates r;
  r.denominator = n_a * n_b;
  r.hang = r.denominator - ok_a * ok_b;
  r.silent = good_a * good_b;
  for (const auto& [word, count] : wrong_a) {
    if (word == gold.out_b) {
      r.critical += count * good_b;
      continue;
    }
    auto it = wrong_b.find(word);
    if (it != wrong_b.end()) r.critical += count * it->second;
  }
  r.detected = r.denominator - r.hang - r.silent - r.critical;
  return r;
}

/// Oracle for derive_dbf: simulates every cross-replica pair of flips (one in
/// A, one in B, any two cycles in [0, T]) and classifies each run.
inline error_rates brute_force_dbf(const sim_program& prog, const stimulus& stim, const module_map& map,
                                   const run_result& gold, int jobs = 1) {
  if (!gold.done_time) throw error(errc::gold_never_done, "gold run has no completion time");
  const int t = *gold.done_time;
  const std::size_t per_ff = static_cast<std::size_t>(t) + 1;
  const std::size_t n_a = map.ffs_a.size() * per_ff;
  const std::size_t n_b = map.ffs_b.size() * per_ff;
  const std::size_t total = n_a * n_b;
  if (total == 0) throw error(errc::empty_campaign, "brute_force_dbf needs flip-flops in both replicas");
  const std::size_t batches = (total + sim_lanes - 1) / sim_lanes;
  std::vector<error_rates> partial(batches);
  campaign_detail::parallel_for(batches, jobs, [&](std::size_t b) {
    const std::size_t first = b * sim_lanes;
    const std::size_t count = std::min(sim_lanes, total - first);
    std::vector<fault_spec> faults(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t idx = first + i;
      const std::size_t ia = idx / n_b, ib = idx % n_b;
      faults[i].injections.push_back({map.ffs_a[ia / per_ff], static_cast<int>(ia % per_ff)});
      faults[i].injections.push_back({map.ffs_b[ib / per_ff], static_cast<int>(ib % per_ff)});
    }
    auto runs = run_fault_lanes(prog, stim, faults, t);
    for (const auto& run : runs) partial[b].add(classify(run, gold));
  });
  error_rates r;
  for (const auto& p : partial) {
    r.critical += p.critical;
    r.detected += p.detected;
    r.hang += p.hang;
    r.silent += p.silent;
    r.denominator += p.denominator;
  }
  return r;
}

/// Campaign file: one line per record
/// `ff_id,cycle,replica,class,done_ok,hex(out_A),hex(out_B)` followed by a
/// `#`-prefixed footer with the gold outputs, T and both rate sets.
inline void write_campaign_file(std::ostream& os, const sbf_campaign& campaign, const sim_program& prog,
                                const error_rates& sbf, const error_rates& dbf) {
  os << "ff_id,cycle,replica,class,done_ok,out_a,out_b\n";
  for (const auto& rec : campaign.records)
    os << prog.cell_ids[rec.ff_id] << ',' << rec.cycle << ',' << tag_name(rec.replica) << ','
       << class_name(rec.cls) << ',' << (rec.done_ok ? 1 : 0) << ',' << to_hex(rec.out_a) << ','
       << to_hex(rec.out_b) << '\n';
  os << "# gold_out_a " << to_hex(campaign.gold.out_a) << "\n";
  os << "# gold_out_b " << to_hex(campaign.gold.out_b) << "\n";
  os << "# done_time " << *campaign.gold.done_time << "\n";
  auto rates = [&](std::string_view tag, const error_rates& r) {
    os << "# " << tag << "_cer " << rational_string(r.critical, r.denominator) << "\n";
    os << "# " << tag << "_der " << rational_string(r.detected, r.denominator) << "\n";
    os << "# " << tag << "_her " << rational_string(r.hang, r.denominator) << "\n";
    os << "# " << tag << "_ser " << rational_string(r.silent, r.denominator) << "\n";
  };
  rates("sbf", sbf);
  rates("dbf", dbf);
}

}  // namespace dmrgnn
