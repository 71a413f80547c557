#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nesy {

// Coarse classification used by the CLI to pick an exit code.
enum class error_kind { usage = 1, input = 2, semantic = 3 };

class error : public std::runtime_error {
public:
    error(error_kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    error_kind kind() const noexcept { return kind_; }

private:
    error_kind kind_;
};

// Malformed DIMACS, formula text, circuit file or weight file.
class parse_error : public error {
public:
    parse_error(const std::string& what, std::size_t line, std::size_t column = 0)
        : error(error_kind::input, format(what, line, column)), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& what, std::size_t line, std::size_t column) {
        std::string out = "line " + std::to_string(line);
        if (column != 0) out += ", column " + std::to_string(column);
        return out + ": " + what;
    }

    std::size_t line_;
    std::size_t column_;
};

class semantic_error : public error {
public:
    explicit semantic_error(const std::string& what) : error(error_kind::semantic, what) {}
};

// Raised when two structures are combined and no transformation between them exists.
class incompatible_structures : public semantic_error {
public:
    incompatible_structures(std::string from, std::string to, const std::string& context = {})
        : semantic_error("IncompatibleStructures: " + from + " -> " + to +
                         (context.empty() ? std::string{} : " (" + context + ")")),
          from_(std::move(from)),
          to_(std::move(to)) {}

    const std::string& from() const noexcept { return from_; }
    const std::string& to() const noexcept { return to_; }

private:
    std::string from_;
    std::string to_;
};

// A circuit lacks a structural property an operation requires.
class structural_error : public semantic_error {
public:
    structural_error(std::string property, const std::string& what)
        : semantic_error(what), property_(std::move(property)) {}
    const std::string& property() const noexcept { return property_; }

private:
    std::string property_;
};

// Runtime interface violations collected by validation.
class validation_error : public semantic_error {
public:
    explicit validation_error(std::vector<std::string> violations)
        : semantic_error(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "validation failed";
        for (const auto& s : v) out += "; " + s;
        return out;
    }
    std::vector<std::string> violations_;
};

}  // namespace nesy
