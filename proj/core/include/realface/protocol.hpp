#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "realface/corpus.hpp"
#include "realface/matcher.hpp"
#include "realface/oracle.hpp"

namespace realface {

/// JSON-lines wire protocol for external face recognition systems.
///
///   request:  {"request_id": str, "probe": {"kind": "vector"|"pgm", "d"?: int, "data": base64}, "v": 1}
///   response: {"request_id": str, "id"?: str, "score"?: float, "polarity"?: "distance"|"confidence",
///              "error"?: {"code": str, "message": str}, "v": 1}
///
/// Vector probes carry little-endian float64; pgm probes carry a P5 file.
namespace protocol {

inline constexpr int kVersion = 1;

enum class ProbeKind { vector, pgm };

struct OracleRequest {
  std::string request_id;
  ProbeKind kind = ProbeKind::vector;
  FaceVector probe;
};

struct OracleErrorFrame {
  std::string code;
  std::string message;
};

struct OracleResponse {
  std::string request_id;
  std::optional<std::string> id;
  std::optional<double> score;
  std::optional<Polarity> polarity;
  std::optional<OracleErrorFrame> error;

  bool ok() const noexcept { return !error.has_value(); }
  MatchResult to_match() const;
};

/// Frames are returned without the trailing newline.
std::string encode_request(const OracleRequest& request);
OracleRequest decode_request(std::string_view line);
std::string encode_response(const OracleResponse& response);
OracleResponse decode_response(std::string_view line);

/// Server side: answers one request line with the built-in matcher. Never
/// throws; malformed input yields an error frame ("parse_error",
/// "unsupported_probe", "shape_error", "backend_error").
std::string handle_frame(std::string_view line, const Gallery& gallery, Metric metric);

/// One session with an external system.
class Connection {
 public:
  virtual ~Connection() = default;
  /// Sends one frame (newline appended by the transport).
  virtual void send(std::string_view frame) = 0;
  /// Next frame, or nullopt when nothing arrived within `timeout`.
  virtual std::optional<std::string> receive(std::chrono::milliseconds timeout) = 0;

  /// Request ids already answered or abandoned in this session.
  std::set<std::string>& retired() noexcept { return retired_; }

 private:
  std::set<std::string> retired_;
};

/// Child process speaking JSON lines over stdin/stdout (`/bin/sh -c command`).
std::unique_ptr<Connection> spawn_process(const std::string& command);

/// HTTP POST of each frame to `url` (e.g. http://127.0.0.1:8080/match).
std::unique_ptr<Connection> connect_http(const std::string& url, std::chrono::milliseconds timeout);

/// In-process connection; `handler` maps a request line to a response line.
std::unique_ptr<Connection> loopback(std::function<std::string(std::string_view)> handler);

/// Sends `request` and waits for the response with the same request_id,
/// re-sending on timeout up to `retries` times. Late answers to earlier
/// requests of the session are skipped; any other id is a ProtocolError.
/// Throws OracleUnavailable once every attempt has timed out.
OracleResponse query(Connection& connection, const OracleRequest& request, std::chrono::milliseconds timeout,
                     int retries);

}  // namespace protocol

/// Oracle backed by a protocol connection. Error frames yield a NaN score so
/// the optimizer treats them as +inf and carries on.
class ProtocolOracle final : public Oracle {
 public:
  struct Options {
    std::chrono::milliseconds timeout{5000};
    int retries = 2;
    protocol::ProbeKind probe_kind = protocol::ProbeKind::vector;
    Polarity polarity = Polarity::distance;
  };

  ProtocolOracle(std::unique_ptr<protocol::Connection> connection, Options options);

  MatchResult query(const FaceVector& probe) override;
  Polarity polarity() const override { return options_.polarity; }
  std::size_t error_frames() const noexcept { return error_frames_; }

 private:
  std::unique_ptr<protocol::Connection> connection_;
  Options options_;
  std::uint64_t next_id_ = 0;
  std::size_t error_frames_ = 0;
};

}  // namespace realface
