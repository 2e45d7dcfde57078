#include "realface/protocol.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "realface/base64.hpp"
#include "realface/error.hpp"
#include "realface/pgm.hpp"

namespace realface {
namespace protocol {

using json = nlohmann::ordered_json;

namespace {

json parse_object(std::string_view line) {
  json frame;
  try {
    frame = json::parse(line);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed frame: ") + e.what());
  }
  if (!frame.is_object()) throw ProtocolError("frame is not a JSON object");
  return frame;
}

const json& member(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ProtocolError(std::string("frame lacks \"") + key + "\"");
  return *it;
}

std::string string_member(const json& obj, const char* key) {
  const auto& v = member(obj, key);
  if (!v.is_string()) throw ProtocolError(std::string("\"") + key + "\" must be a string");
  return v.get<std::string>();
}

void check_version(const json& frame) {
  const auto it = frame.find("v");
  if (it != frame.end() && (!it->is_number_integer() || it->get<int>() != kVersion)) {
    throw ProtocolError("unsupported protocol version");
  }
}

class UnsupportedProbe : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

}  // namespace

MatchResult OracleResponse::to_match() const {
  if (error) throw ProtocolError("error frame has no match: " + error->code);
  return MatchResult{id.value_or(""), score.value_or(std::numeric_limits<double>::quiet_NaN()),
                     polarity.value_or(Polarity::distance)};
}

std::string encode_request(const OracleRequest& request) {
  json probe;
  if (request.kind == ProbeKind::vector) {
    const auto& v = request.probe.data;
    probe["kind"] = "vector";
    probe["d"] = v.size();
    probe["data"] = base64::encode_doubles({v.data(), static_cast<std::size_t>(v.size())});
  } else {
    if (!request.probe.image_backed()) throw ShapeError("pgm probes need an image-backed face");
    probe["kind"] = "pgm";
    probe["data"] = base64::encode(encode_pgm(request.probe));
  }
  json frame;
  frame["request_id"] = request.request_id;
  frame["probe"] = std::move(probe);
  frame["v"] = kVersion;
  return frame.dump();
}

OracleRequest decode_request(std::string_view line) {
  const json frame = parse_object(line);
  check_version(frame);
  OracleRequest request;
  request.request_id = string_member(frame, "request_id");
  const auto& probe = member(frame, "probe");
  if (!probe.is_object()) throw ProtocolError("\"probe\" must be an object");
  const std::string kind = string_member(probe, "kind");
  const std::string data = string_member(probe, "data");
  try {
    if (kind == "vector") {
      request.kind = ProbeKind::vector;
      const auto values = base64::decode_doubles(data);
      const auto d_it = probe.find("d");
      if (d_it != probe.end()) {
        if (!d_it->is_number_unsigned() || d_it->get<std::size_t>() != values.size()) {
          throw ShapeError("probe \"d\" does not match its data");
        }
      }
      request.probe = FaceVector(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
    } else if (kind == "pgm") {
      request.kind = ProbeKind::pgm;
      const auto bytes = base64::decode(data);
      request.probe = decode_pgm(bytes);
    } else {
      throw UnsupportedProbe("unsupported probe kind \"" + kind + "\"");
    }
  } catch (const ParseError& e) {
    throw ProtocolError(e.what());
  }
  return request;
}

std::string encode_response(const OracleResponse& response) {
  json frame;
  frame["request_id"] = response.request_id;
  if (response.error) {
    frame["error"] = json{{"code", response.error->code}, {"message", response.error->message}};
  } else {
    if (response.id) frame["id"] = *response.id;
    if (response.score) {
      if (!std::isfinite(*response.score)) throw ProtocolError("scores on the wire must be finite");
      frame["score"] = *response.score;
    }
    if (response.polarity) frame["polarity"] = std::string(to_string(*response.polarity));
  }
  frame["v"] = kVersion;
  // Error messages may echo bytes of a corrupt request; never fail on them.
  return frame.dump(-1, ' ', false, json::error_handler_t::replace);
}

OracleResponse decode_response(std::string_view line) {
  const json frame = parse_object(line);
  check_version(frame);
  OracleResponse response;
  response.request_id = string_member(frame, "request_id");
  if (const auto it = frame.find("error"); it != frame.end()) {
    if (!it->is_object()) throw ProtocolError("\"error\" must be an object");
    response.error = OracleErrorFrame{string_member(*it, "code"), it->value("message", std::string())};
    if (frame.contains("id") || frame.contains("score")) {
      throw ProtocolError("error frames cannot carry a match");
    }
    return response;
  }
  if (const auto it = frame.find("id"); it != frame.end()) {
    if (!it->is_string()) throw ProtocolError("\"id\" must be a string");
    response.id = it->get<std::string>();
  }
  if (const auto it = frame.find("score"); it != frame.end()) {
    if (!it->is_number()) throw ProtocolError("\"score\" must be a number");
    response.score = it->get<double>();
  }
  if (const auto it = frame.find("polarity"); it != frame.end()) {
    if (!it->is_string()) throw ProtocolError("\"polarity\" must be a string");
    try {
      response.polarity = parse_polarity(it->get<std::string>());
    } catch (const Error& e) {
      throw ProtocolError(e.what());
    }
  }
  if (!response.id || !response.score) throw ProtocolError("response frame needs either an error or id and score");
  return response;
}

std::string handle_frame(std::string_view line, const Gallery& gallery, Metric metric) {
  OracleResponse response;
  auto fail = [&](const char* code, const std::string& message) {
    response.error = OracleErrorFrame{code, message};
    response.id.reset();
    response.score.reset();
    response.polarity.reset();
    return encode_response(response);
  };

  // Recover the id from otherwise unusable frames so the client can correlate.
  try {
    const auto raw = json::parse(line);
    if (raw.is_object() && raw.contains("request_id") && raw["request_id"].is_string()) {
      response.request_id = raw["request_id"].get<std::string>();
    }
  } catch (const json::exception&) {
  }

  OracleRequest request;
  try {
    request = decode_request(line);
  } catch (const UnsupportedProbe& e) {
    return fail("unsupported_probe", e.what());
  } catch (const ShapeError& e) {
    return fail("shape_error", e.what());
  } catch (const std::exception& e) {
    return fail("parse_error", e.what());
  }

  try {
    const MatchResult m = match(gallery, request.probe, metric);
    if (!std::isfinite(m.score)) return fail("backend_error", "non-finite score");
    response.id = m.id;
    response.score = m.score;
    response.polarity = m.polarity;
    return encode_response(response);
  } catch (const ShapeError& e) {
    return fail("shape_error", e.what());
  } catch (const std::exception& e) {
    return fail("backend_error", e.what());
  }
}

OracleResponse query(Connection& connection, const OracleRequest& request, std::chrono::milliseconds timeout,
                     int retries) {
  if (retries < 0) throw SpecError("retries must be non-negative");
  const std::string frame = encode_request(request);
  auto& retired = connection.retired();
  if (retired.count(request.request_id)) throw ProtocolError("request id reused: " + request.request_id);

  for (int attempt = 0; attempt <= retries; ++attempt) {
    connection.send(frame);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) break;
      const auto line = connection.receive(left);
      if (!line) break;
      OracleResponse response = decode_response(*line);
      if (response.request_id == request.request_id) {
        retired.insert(request.request_id);
        return response;
      }
      if (retired.count(response.request_id)) continue;  // late duplicate of an earlier request
      throw ProtocolError("response for unknown request id \"" + response.request_id + "\"");
    }
  }
  retired.insert(request.request_id);
  throw OracleUnavailable("no response to " + request.request_id + " after " + std::to_string(retries + 1) +
                          " attempt(s)");
}

}  // namespace protocol

ProtocolOracle::ProtocolOracle(std::unique_ptr<protocol::Connection> connection, Options options)
    : connection_(std::move(connection)), options_(options) {
  if (!connection_) throw SpecError("protocol oracle needs a connection");
}

MatchResult ProtocolOracle::query(const FaceVector& probe) {
  protocol::OracleRequest request{"q" + std::to_string(next_id_++), options_.probe_kind, probe};
  const auto response = protocol::query(*connection_, request, options_.timeout, options_.retries);
  if (!response.ok()) {
    ++error_frames_;
    return MatchResult{"", std::numeric_limits<double>::quiet_NaN(), options_.polarity};
  }
  MatchResult m = response.to_match();
  if (response.polarity && *response.polarity != options_.polarity) {
    throw PolarityError("oracle declared " + std::string(to_string(*response.polarity)) + " polarity, expected " +
                        std::string(to_string(options_.polarity)));
  }
  return m;
}

}  // namespace realface
