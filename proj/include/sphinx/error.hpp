#pragma once

#include <stdexcept>
#include <string>

namespace sphinx {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Source-level error from the assembler front end; carries a 1-based line
/// number (0 when the error is not tied to a line).
class AsmError : public Error {
public:
    AsmError(int line, const std::string& msg)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class EncodeError : public Error {
public:
    using Error::Error;
};

class IllegalInstruction : public Error {
public:
    explicit IllegalInstruction(unsigned word);
    unsigned word() const noexcept { return word_; }

private:
    unsigned word_;
};

/// Mask decryption failed its integrity check: wrong device key or a
/// tampered image.
class BadKeyOrCorrupt : public Error {
public:
    using Error::Error;
};

class ImageFormatError : public Error {
public:
    using Error::Error;
};

class ObfuscationError : public Error {
public:
    using Error::Error;
};

class ZeroVariance : public Error {
public:
    ZeroVariance() : Error("zero variance") {}
};

class TraceTooShort : public Error {
public:
    using Error::Error;
};

} // namespace sphinx
