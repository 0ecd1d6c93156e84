#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdrec {

// Every failure the toolkit reports falls in one of three families; the CLI
// maps them onto exit codes 2, 3 and 4.
enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::Config: return 2;
      case ErrorKind::Data: return 3;
      case ErrorKind::Numeric: return 4;
    }
    return 1;
  }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

// data-core

class MalformedLine : public DataError {
 public:
  explicit MalformedLine(std::size_t line)
      : DataError("malformed interaction at line " + std::to_string(line)), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyDataset : public DataError {
 public:
  EmptyDataset() : DataError("dataset contains no interactions") {}
};

class NoOverlap : public DataError {
 public:
  NoOverlap() : DataError("source and target domains share no users") {}
};

class DegenerateScenario : public DataError {
 public:
  explicit DegenerateScenario(const std::string& why) : DataError("degenerate scenario: " + why) {}
};

class InsufficientCandidates : public DataError {
 public:
  explicit InsufficientCandidates(std::size_t pool)
      : DataError("only " + std::to_string(pool) + " negative candidates available"), pool_(pool) {}
  std::size_t pool_size() const noexcept { return pool_; }

 private:
  std::size_t pool_;
};

class UnknownUser : public DataError {
 public:
  explicit UnknownUser(const std::string& id) : DataError("unknown user '" + id + "'") {}
};

class IndexMismatch : public DataError {
 public:
  explicit IndexMismatch(const std::string& what) : DataError("index mismatch: " + what) {}
};

class EmptyCandidates : public DataError {
 public:
  EmptyCandidates() : DataError("candidate list is empty") {}
};

class MissingTestItem : public DataError {
 public:
  MissingTestItem() : DataError("test item is not among the scored candidates") {}
};

class NoOverlapUsers : public DataError {
 public:
  NoOverlapUsers() : DataError("no overlapping users available for mapping training") {}
};

class EmptyBatch : public DataError {
 public:
  EmptyBatch() : DataError("empty batch") {}
};

class ScorerFailure : public DataError {
 public:
  ScorerFailure(const std::string& user, const std::string& why)
      : DataError("scorer failed for user '" + user + "': " + why) {}
};

class InfeasibleDensity : public ConfigError {
 public:
  explicit InfeasibleDensity(const std::string& why) : ConfigError("infeasible density: " + why) {}
};

// numerics

class DimensionMismatch : public NumericError {
 public:
  DimensionMismatch(std::size_t expected, std::size_t got)
      : NumericError("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                     std::to_string(got)) {}
};

class NonFiniteInput : public NumericError {
 public:
  NonFiniteInput() : NumericError("non-finite input vector") {}
};

class NonFiniteLoss : public NumericError {
 public:
  explicit NonFiniteLoss(int epoch)
      : NumericError("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace cdrec
