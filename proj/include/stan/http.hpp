#pragma once

// HTTP/JSON binding of the service for the review UI.

#include <arpa/inet.h>

#include <cstdlib>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "stan/service.hpp"

namespace stan {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kInvalidState:
    case ErrorCode::kWriteConflict: return 409;
    case ErrorCode::kNotReady: return 202;
    case ErrorCode::kTooLittleSpeech: return 422;
    case ErrorCode::kStorageFull: return 507;
    case ErrorCode::kCorruptArtifact:
    case ErrorCode::kIo:
    case ErrorCode::kDimensionMismatch: return 500;
    default: return 400;
  }
}

/// True for loopback, private (RFC 1918), link-local and wildcard addresses.
inline bool is_local_bind_address(const std::string& host) {
  if (host == "localhost" || host == "::1" || host == "::" || host == "0.0.0.0") return true;
  in_addr a4{};
  if (inet_pton(AF_INET, host.c_str(), &a4) == 1) {
    const std::uint32_t ip = ntohl(a4.s_addr);
    const auto in = [&](std::uint32_t net, int bits) { return (ip >> (32 - bits)) == (net >> (32 - bits)); };
    return in(0x7F000000, 8) || in(0x0A000000, 8) || in(0xAC100000, 12) || in(0xC0A80000, 16) ||
           in(0xA9FE0000, 16);
  }
  in6_addr a6{};
  if (inet_pton(AF_INET6, host.c_str(), &a6) == 1) {
    return (a6.s6_addr[0] & 0xFE) == 0xFC ||                          // unique local
           (a6.s6_addr[0] == 0xFE && (a6.s6_addr[1] & 0xC0) == 0x80);  // link local
  }
  return false;
}

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), {{"error", error_name(code)}, {"message", message}});
}

inline double query_double(const httplib::Request& req, const std::string& key, std::optional<double> fallback) {
  if (!req.has_param(key)) {
    if (fallback) return *fallback;
    fail(ErrorCode::kRangeOutOfBounds, "missing query parameter '" + key + "'");
  }
  const std::string v = req.get_param_value(key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(d)) {
    fail(ErrorCode::kRangeOutOfBounds, "query parameter '" + key + "' is not a number");
  }
  return d;
}

inline std::optional<std::int64_t> query_int(const httplib::Request& req, const std::string& key) {
  if (!req.has_param(key)) return std::nullopt;
  try {
    return std::stoll(req.get_param_value(key));
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidConfig, "query parameter '" + key + "' is not an integer");
  }
}

inline std::span<const std::uint8_t> body_bytes(const httplib::Request& req) {
  return {reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()};
}

inline nlohmann::json spectrogram_json(const SpectrogramSlice& s) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t k = 0; k < s.n_frames(); ++k) {
    nlohmann::json row = nlohmann::json::array();
    for (double p : s.frame(k)) row.push_back(static_cast<float>(10.0 * std::log10(std::max(p, 1e-12))));
    frames.push_back(std::move(row));
  }
  return {{"start_s", s.start_s}, {"end_s", s.end_s}, {"hop_s", s.hop_s},       {"fft_size", s.fft_size},
          {"bin_hz", s.bin_hz},   {"n_bins", s.n_bins()}, {"n_frames", s.n_frames()}, {"power_db", frames}};
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const NotReady& e) {
      send_json(res, 202, {{"error", "not_ready"}, {"message", e.what()}, {"progress", e.progress()}});
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace detail

/// Registers every endpoint on `server`. The service must outlive it.
inline void mount_routes(httplib::Server& server, Service& svc) {
  using detail::guarded;
  using detail::send_json;
  using nlohmann::json;
  const std::string id = "([0-9a-f]{32})";

  server.Post("/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
                const json body = req.body.empty() ? json::object() : json::parse(req.body);
                const auto task = parse_task(body.value("task", "conversation"));
                if (!task) fail(ErrorCode::kInvalidConfig, "task must be 'reading' or 'conversation'");
                std::optional<std::string> text;
                if (body.contains("reading_text") && !body["reading_text"].is_null())
                  text = body["reading_text"].get<std::string>();
                send_json(res, 201, SessionStore::session_json(svc.create_session(*task, text)));
              }));

  server.Get("/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
               SessionFilter f;
               if (req.has_param("task")) {
                 f.task = parse_task(req.get_param_value("task"));
                 if (!f.task) fail(ErrorCode::kInvalidConfig, "unknown task filter");
               }
               if (req.has_param("state")) {
                 f.state = parse_state(req.get_param_value("state"));
                 if (!f.state) fail(ErrorCode::kInvalidConfig, "unknown state filter");
               }
               f.from_ms = detail::query_int(req, "from_ms");
               f.to_ms = detail::query_int(req, "to_ms");
               json out = json::array();
               for (const auto& s : svc.list_sessions(f)) out.push_back(SessionStore::session_json(s));
               send_json(res, 200, {{"sessions", out}});
             }));

  server.Get("/sessions/" + id, guarded([&](const httplib::Request& req, httplib::Response& res) {
               const std::string sid = req.matches[1];
               json s = SessionStore::session_json(svc.get_session(sid));
               if (const auto job = svc.job_for_session(sid)) s["job"] = job_json(*job);
               send_json(res, 200, s);
             }));

  server.Post("/sessions/" + id + "/enroll", guarded([&](const httplib::Request& req, httplib::Response& res) {
                const std::string role = req.has_param("role") ? req.get_param_value("role") : "therapist";
                if (role != "therapist" && role != "client") {
                  fail(ErrorCode::kInvalidConfig, "role must be 'therapist' or 'client'");
                }
                const auto r = role == "therapist" ? SpeakerRole::kTherapist : SpeakerRole::kClient;
                send_json(res, 200, svc.enroll(req.matches[1], r, detail::body_bytes(req)));
              }));

  server.Post("/sessions/" + id + "/recording", guarded([&](const httplib::Request& req, httplib::Response& res) {
                const std::string job = svc.submit_recording(req.matches[1], detail::body_bytes(req));
                send_json(res, 202, job_json(svc.get_job(job)));
              }));

  server.Post("/sessions/" + id + "/recording/chunks",
              guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, svc.append_chunk(req.matches[1], detail::body_bytes(req)));
              }));

  server.Post("/sessions/" + id + "/recording/stop",
              guarded([&](const httplib::Request& req, httplib::Response& res) {
                const std::string job = svc.finish_recording(req.matches[1]);
                send_json(res, 202, job_json(svc.get_job(job)));
              }));

  server.Get("/sessions/" + id + "/analysis", guarded([&](const httplib::Request& req, httplib::Response& res) {
               res.status = 200;
               res.set_content(bundle_text(svc.get_analysis(req.matches[1])), "application/json");
             }));

  server.Get("/sessions/" + id + "/spectrogram", guarded([&](const httplib::Request& req, httplib::Response& res) {
               const double from = detail::query_double(req, "from", std::nullopt);
               const double to = detail::query_double(req, "to", std::nullopt);
               send_json(res, 200, detail::spectrogram_json(svc.get_spectrogram(req.matches[1], from, to)));
             }));

  server.Get("/sessions/" + id + "/audio", guarded([&](const httplib::Request& req, httplib::Response& res) {
               const std::string sid = req.matches[1];
               const StoredSession s = svc.store().load_session(sid);
               if (!req.has_param("from") && !req.has_param("to") && s.has(Artifact::kAudio)) {
                 const Bytes b = svc.store().read_artifact(s, Artifact::kAudio);
                 res.set_content(std::string(b.begin(), b.end()), "audio/wav");
                 return;
               }
               const double from = detail::query_double(req, "from", 0.0);
               const double to = detail::query_double(req, "to", std::nullopt);
               const Bytes b = svc.get_audio_slice(sid, from, to);
               res.set_content(std::string(b.begin(), b.end()), "audio/wav");
             }));

  server.Get("/jobs/([A-Za-z0-9-]+)", guarded([&](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, job_json(svc.get_job(req.matches[1])));
             }));

  server.Get("/config", guarded([&](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, svc.config().to_json());
             }));
}

}  // namespace stan
