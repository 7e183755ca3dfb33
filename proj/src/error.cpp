#include "poseidon/error.hpp"

namespace poseidon {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::UnsupportedFormat: return "unsupported-format";
    case ErrorKind::CorruptCapture: return "corrupt-capture";
    case ErrorKind::Io: return "io";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NoModel: return "no-model";
    case ErrorKind::Training: return "training";
    case ErrorKind::StoreFormat: return "store-format";
    case ErrorKind::StoreVersion: return "store-version";
    case ErrorKind::Truth: return "truth";
    case ErrorKind::Config: return "config";
    }
    return "unknown";
}

}  // namespace poseidon
