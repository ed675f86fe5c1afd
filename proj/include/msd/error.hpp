#pragma once

#include <stdexcept>
#include <string>

namespace msd {

// Broad failure classes; the CLI maps each one to an exit code.
enum class ErrorKind {
    Io,      // unreadable/unwritable paths, bad user input
    Data,    // malformed records, broken contracts between inputs
    Remote,  // embedding server unreachable or misbehaving
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error io_error(const std::string& what) { return Error(ErrorKind::Io, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::Data, what); }
inline Error remote_error(const std::string& what) { return Error(ErrorKind::Remote, what); }

}  // namespace msd
