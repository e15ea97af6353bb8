#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmrgnn {

enum class errc {
  lex_error,
  syntax_error,
  unknown_primitive,
  multi_driver,
  dangling_net,
  missing_done_port,
  combinational_cycle,
  unmatched_instance,
  invalid_stimulus,
  invalid_fault,
  gold_never_done,
  empty_campaign,
  shared_state_unsupported,
  unknown_kind,
  vocabulary_mismatch,
  dimension_mismatch,
  dataset_too_small,
  degenerate_truths,
  unknown_seed,
  interface_mismatch,
  input_space_too_large,
  equivalence_failure,
  missing_timings,
  io_error,
};

constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::lex_error: return "LexError";
    case errc::syntax_error: return "SyntaxError";
    case errc::unknown_primitive: return "UnknownPrimitive";
    case errc::multi_driver: return "MultiDriver";
    case errc::dangling_net: return "DanglingNet";
    case errc::missing_done_port: return "MissingDonePort";
    case errc::combinational_cycle: return "CombinationalCycle";
    case errc::unmatched_instance: return "UnmatchedInstance";
    case errc::invalid_stimulus: return "InvalidStimulus";
    case errc::invalid_fault: return "InvalidFault";
    case errc::gold_never_done: return "GoldNeverDone";
    case errc::empty_campaign: return "EmptyCampaign";
    case errc::shared_state_unsupported: return "SharedStateUnsupported";
    case errc::unknown_kind: return "UnknownKind";
    case errc::vocabulary_mismatch: return "VocabularyMismatch";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::dataset_too_small: return "DatasetTooSmall";
    case errc::degenerate_truths: return "DegenerateTruths";
    case errc::unknown_seed: return "UnknownSeed";
    case errc::interface_mismatch: return "InterfaceMismatch";
    case errc::input_space_too_large: return "InputSpaceTooLarge";
    case errc::equivalence_failure: return "EquivalenceFailure";
    case errc::missing_timings: return "MissingTimings";
    case errc::io_error: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's machine-readable error line) can dispatch on it.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace dmrgnn
