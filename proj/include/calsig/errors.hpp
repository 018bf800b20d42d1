#ifndef CALSIG_ERRORS_HPP
#define CALSIG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace calsig {

// Error categories map to process exit codes in the CLI:
// config/parse -> 2, data -> 3, convergence -> 4.
enum class ErrorCategory { config, data, convergence };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const { return category_; }

private:
    ErrorCategory category_;
};

class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& what)
        : Error(ErrorCategory::data, what) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what)
        : Error(ErrorCategory::config, what) {}
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(ErrorCategory::convergence, what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

class NoCellFoundError : public Error {
public:
    explicit NoCellFoundError(const std::string& what)
        : Error(ErrorCategory::data, what) {}
};

class EmptyCellError : public Error {
public:
    explicit EmptyCellError(const std::string& what)
        : Error(ErrorCategory::data, what) {}
};

class UndefinedRatioError : public Error {
public:
    explicit UndefinedRatioError(const std::string& what)
        : Error(ErrorCategory::data, what) {}
};

class IllConditionedError : public Error {
public:
    explicit IllConditionedError(const std::string& what)
        : Error(ErrorCategory::data, what) {}
};

class NoRiseError : public Error {
public:
    explicit NoRiseError(const std::string& what)
        : Error(ErrorCategory::data, what) {}
};

} // namespace calsig

#endif
