#ifndef SEBA_ERROR_HPP
#define SEBA_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace seba {

/// Category of a failure raised anywhere in the library.
enum class ErrorKind {
    Schema,
    Parse,
    Format,
    Split,
    Episode,
    Encoding,
    Mask,
    View,
    Dimension,
    Loss,
    Optimizer,
    Training,
    Head,
    Checkpoint,
    Theory,
    Analysis,
    Config,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Schema: return "schema error";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Split: return "split error";
        case ErrorKind::Episode: return "episode error";
        case ErrorKind::Encoding: return "encoding error";
        case ErrorKind::Mask: return "mask error";
        case ErrorKind::View: return "view error";
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Loss: return "loss error";
        case ErrorKind::Optimizer: return "optimizer error";
        case ErrorKind::Training: return "training error";
        case ErrorKind::Head: return "head error";
        case ErrorKind::Checkpoint: return "checkpoint error";
        case ErrorKind::Theory: return "theory error";
        case ErrorKind::Analysis: return "analysis error";
        case ErrorKind::Config: return "config error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace seba

#endif
