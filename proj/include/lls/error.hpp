#pragma once

#include <stdexcept>
#include <string>

namespace lls {

// Failure identities surfaced by the library. Each error names the condition it
// reports; `index` carries the offending column/row/epoch where that is meaningful.
enum class errc {
  rank_deficient,
  degenerate_input,
  zero_column,
  zero_row,
  generation_budget_exceeded,
  out_of_support,
  shape_mismatch,
  training_diverged,
  invalid_input,
  insufficient_distinct_points,
  empty_domain,
  invalid_rank,
  anchor_deficient,
  undefined_posterior,
  parse_error,
  io_error,
};

const char* errc_name(errc c);

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg, long index = -1)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg),
        code_(code),
        index_(index) {}

  errc code() const noexcept { return code_; }
  long index() const noexcept { return index_; }

 private:
  errc code_;
  long index_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg, long index = -1) {
  throw Error(code, msg, index);
}

}  // namespace lls
