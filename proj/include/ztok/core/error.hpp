#pragma once

#include <stdexcept>
#include <string>

namespace ztok {

// Error categories map onto CLI exit codes: usage -> 2, input -> 3,
// runtime -> 4. Logic errors indicate a broken internal invariant.
enum class ErrKind { usage, input, runtime, logic };

class Error : public std::runtime_error {
 public:
  Error(ErrKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrKind kind() const { return kind_; }

  static Error usage(const std::string& msg) { return Error(ErrKind::usage, msg); }
  static Error input(const std::string& msg) { return Error(ErrKind::input, msg); }
  static Error runtime(const std::string& msg) { return Error(ErrKind::runtime, msg); }
  static Error logic(const std::string& msg) { return Error(ErrKind::logic, msg); }

 private:
  ErrKind kind_;
};

#define ZTOK_CHECK(cond, kind, msg)                        \
  do {                                                     \
    if (!(cond)) throw ::ztok::Error(::ztok::ErrKind::kind, (msg)); \
  } while (0)

}  // namespace ztok
