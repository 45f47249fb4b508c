#pragma once

#include <stdexcept>
#include <string>

namespace ikrl {

// Malformed input text (triple files, config files). Carries the 1-based line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Binary file problems: bad magic, truncation, dimension mismatch, duplicates.
class FormatError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Every candidate corruption of a triple is a known-true triple.
class SamplingExhausted : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class MissingFeatures : public std::runtime_error {
public:
    explicit MissingFeatures(std::size_t entity)
        : std::runtime_error("entity " + std::to_string(entity) + " has no image features"),
          entity_(entity) {}

    std::size_t entity() const noexcept { return entity_; }

private:
    std::size_t entity_;
};

// Synthetic generator cannot produce the requested number of distinct triples.
class GenerationShortfall : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or parameters.
class NumericError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ikrl
