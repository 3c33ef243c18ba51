#ifndef HIERSR_ERROR_HPP
#define HIERSR_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace hiersr {

enum class Errc {
    LengthMismatch,
    NonFiniteValue,
    BadDims,
    NonPositiveForLog,
    OutOfBounds,
    ShapeMismatch,
    UnknownKind,
    OddDimension,
    NotPowerOfTwo,
    IndivisibleDimension,
    LevelOrder,
    EmptyVolume,
    BadConfig,
    OrphanSingleVoxel,
    TooSmallForWindow,
    // model backend
    BadSpec,
    ConnectFailed,
    HandshakeTimeout,
    ProtocolViolation,
    ServerError,
    Timeout,
    PayloadTooLarge,
    // io
    IoError,
    HeaderPayloadMismatch,
    UnsupportedElementType,
    CorruptHeader,
    BadMagic,
    VersionUnsupported,
    InvariantViolation,
};

inline std::string_view errc_name(Errc e) {
    switch (e) {
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::BadDims: return "BadDims";
    case Errc::NonPositiveForLog: return "NonPositiveForLog";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::UnknownKind: return "UnknownKind";
    case Errc::OddDimension: return "OddDimension";
    case Errc::NotPowerOfTwo: return "NotPowerOfTwo";
    case Errc::IndivisibleDimension: return "IndivisibleDimension";
    case Errc::LevelOrder: return "LevelOrder";
    case Errc::EmptyVolume: return "EmptyVolume";
    case Errc::BadConfig: return "BadConfig";
    case Errc::OrphanSingleVoxel: return "OrphanSingleVoxel";
    case Errc::TooSmallForWindow: return "TooSmallForWindow";
    case Errc::BadSpec: return "BadSpec";
    case Errc::ConnectFailed: return "ConnectFailed";
    case Errc::HandshakeTimeout: return "HandshakeTimeout";
    case Errc::ProtocolViolation: return "ProtocolViolation";
    case Errc::ServerError: return "ServerError";
    case Errc::Timeout: return "Timeout";
    case Errc::PayloadTooLarge: return "PayloadTooLarge";
    case Errc::IoError: return "IoError";
    case Errc::HeaderPayloadMismatch: return "HeaderPayloadMismatch";
    case Errc::UnsupportedElementType: return "UnsupportedElementType";
    case Errc::CorruptHeader: return "CorruptHeader";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the Errc codes.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace hiersr

#endif
