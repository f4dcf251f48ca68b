#pragma once

#include <stdexcept>
#include <string>

namespace pbt {

// Failure categories surfaced by the library. Each maps to a precondition or
// validation rule; tests assert on the code, messages are for humans.
enum class ErrorCode {
  UnnormalizedRow,        // a CPT row or prior table does not sum to 1
  BadParentSlice,         // a transition parent refers to the next time slice
  DanglingReference,      // a name/id does not resolve to a declared entity
  MissingTable,           // no table supplied for a (variable, action) pair
  PriorNotFactorized,     // a prior block fits inside no beam
  NotRegressable,         // regression asked of a sampled variable without samples
  ImpossibleObservation,  // an update zeroed out an entire factor
  ImpossibleHistory,      // an exact filter update zeroed the whole posterior
  TooLarge,               // joint assembly/enumeration guard exceeded
  NoCoveringBeam,         // no beam contains every sampled variable
  ZeroLikelihood,         // every candidate next sample has zero likelihood
  AllParticlesDead,       // all particle weights are zero
  TargetSpansBeams,       // queried variables fit inside no single beam
  TreewidthExceeded,      // a jointree clique exceeds the size guard
  WipeOut,                // arc consistency emptied a level table
  IoError,                // a result file could not be written or read
  NoCandidates,           // the game policy has no cell left to act on
  BadArgument,            // malformed configuration or input
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace pbt
