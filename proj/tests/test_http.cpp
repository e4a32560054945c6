#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "http_harness.hpp"
#include "schema.hpp"

using namespace stan;
using nlohmann::json;

namespace {

const std::string kDocs = std::string(STAN_SOURCE_DIR) + "/docs";

json parse(const httplib::Result& r) { return json::parse(r->body); }

std::string create(httplib::Client& c) {
  const auto r = c.Post("/sessions", R"({"task":"conversation"})", "application/json");
  EXPECT_EQ(r->status, 201);
  return parse(r).at("id");
}

json wait_for_job(httplib::Client& c, const std::string& job) {
  for (;;) {
    const auto r = c.Get("/jobs/" + job);
    const auto j = parse(r);
    if (j.at("state") != "queued" && j.at("state") != "running") return j;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

}  // namespace

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status(ErrorCode::kNotFound), 404);
  EXPECT_EQ(http_status(ErrorCode::kInvalidState), 409);
  EXPECT_EQ(http_status(ErrorCode::kSpanTooLong), 400);
  EXPECT_EQ(http_status(ErrorCode::kRangeOutOfBounds), 400);
  EXPECT_EQ(http_status(ErrorCode::kMalformedAudio), 400);
  EXPECT_EQ(http_status(ErrorCode::kTooLittleSpeech), 422);
  EXPECT_EQ(http_status(ErrorCode::kStorageFull), 507);
  EXPECT_EQ(http_status(ErrorCode::kCorruptArtifact), 500);
}

TEST(HttpBind, OnlyLocalAddresses) {
  for (const char* ok : {"127.0.0.1", "127.1.2.3", "10.0.0.7", "172.16.4.4", "172.31.255.1", "192.168.1.20",
                         "169.254.1.1", "0.0.0.0", "::1", "::", "fd12:3456::1", "fe80::1", "localhost"}) {
    EXPECT_TRUE(is_local_bind_address(ok)) << ok;
  }
  for (const char* bad : {"8.8.8.8", "172.32.0.1", "192.169.0.1", "2001:db8::1", "example.com", ""}) {
    EXPECT_FALSE(is_local_bind_address(bad)) << bad;
  }
}

TEST(Http, SessionLifecycle) {
  harness::LiveServer srv;
  auto c = srv.client();

  auto r = c.Post("/sessions", R"({"task":"reading"})", "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(parse(r).at("error"), "missing_reading_text");
  r = c.Post("/sessions", "{not json", "application/json");
  EXPECT_EQ(r->status, 400);

  r = c.Post("/sessions", R"({"task":"reading","reading_text":"When the sunlight strikes raindrops"})",
             "application/json");
  ASSERT_EQ(r->status, 201);
  const auto created = parse(r);
  EXPECT_TRUE(schema::validate(created, kDocs, "session.schema.json").empty());
  const std::string id = created.at("id");

  r = c.Get("/sessions/" + id + "/analysis");
  EXPECT_EQ(r->status, 202);
  EXPECT_EQ(parse(r).at("error"), "not_ready");

  const auto clip = fixtures::two_speaker_session(8.0, 4).clip;
  r = c.Post("/sessions/" + id + "/recording", harness::body_of(fixtures::wav_of(clip)), "audio/wav");
  ASSERT_EQ(r->status, 202);
  const auto job = parse(r);
  EXPECT_TRUE(schema::validate(job, kDocs, "job.schema.json").empty());
  r = c.Post("/sessions/" + id + "/recording", harness::body_of(fixtures::wav_of(clip)), "audio/wav");
  EXPECT_EQ(r->status, 409);

  const auto done = wait_for_job(c, job.at("id"));
  EXPECT_EQ(done.at("state"), "done");
  EXPECT_EQ(done.at("progress"), 1.0);

  r = c.Get("/sessions/" + id + "/analysis");
  ASSERT_EQ(r->status, 200);
  for (const auto& e : schema::validate(parse(r), kDocs, "analysis.schema.json")) ADD_FAILURE() << e;

  r = c.Get("/sessions/" + id);
  EXPECT_EQ(parse(r).at("state"), "analyzed");

  r = c.Get("/sessions/" + id + "/audio");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->body, harness::body_of(fixtures::wav_of(clip)));
  r = c.Get("/sessions/" + id + "/audio?from=1&to=2");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "audio/wav");
  EXPECT_EQ(decode_wav(to_bytes(r->body)).samples.size(), 16000u);
  r = c.Get("/sessions/" + id + "/audio?from=2&to=1");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(parse(r).at("error"), "range_out_of_bounds");
}

TEST(Http, SpectrogramGate) {
  harness::LiveServer srv;
  auto c = srv.client();
  const std::string id = create(c);
  auto r = c.Post("/sessions/" + id + "/recording",
                  harness::body_of(fixtures::wav_of(fixtures::two_speaker_session(12.0, 3).clip)), "audio/wav");
  ASSERT_EQ(r->status, 202);
  wait_for_job(c, parse(r).at("id"));

  r = c.Get("/sessions/" + id + "/spectrogram?from=0&to=12");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(parse(r).at("error"), "span_too_long");
  r = c.Get("/sessions/" + id + "/spectrogram?from=0&to=10");
  EXPECT_EQ(parse(r).at("error"), "span_too_long");

  r = c.Get("/sessions/" + id + "/spectrogram?from=0&to=9.9");
  ASSERT_EQ(r->status, 200);
  const auto spec = parse(r);
  EXPECT_DOUBLE_EQ(spec.at("end_s").get<double>() - spec.at("start_s").get<double>(), 9.9);
  EXPECT_EQ(spec.at("n_bins"), 257);
  EXPECT_EQ(spec.at("power_db").size(), spec.at("n_frames").get<std::size_t>());
  EXPECT_EQ(spec.at("power_db").at(0).size(), 257u);

  r = c.Get("/sessions/" + id + "/spectrogram?from=-1&to=2");
  EXPECT_EQ(parse(r).at("error"), "range_out_of_bounds");
  r = c.Get("/sessions/" + id + "/spectrogram?from=abc&to=2");
  EXPECT_EQ(r->status, 400);
  r = c.Get("/sessions/" + id + "/spectrogram?from=1");
  EXPECT_EQ(r->status, 400);
}

TEST(Http, ListingAndFilters) {
  harness::LiveServer srv;
  auto c = srv.client();
  const std::string a = create(c);
  c.Post("/sessions", R"({"task":"reading","reading_text":"x"})", "application/json");
  auto r = c.Get("/sessions");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(parse(r).at("sessions").size(), 2u);
  r = c.Get("/sessions?task=conversation");
  const auto conv = parse(r).at("sessions");
  ASSERT_EQ(conv.size(), 1u);
  EXPECT_EQ(conv[0].at("id"), a);
  r = c.Get("/sessions?state=analyzed");
  EXPECT_TRUE(parse(r).at("sessions").empty());
  r = c.Get("/sessions?state=bogus");
  EXPECT_EQ(r->status, 400);
  r = c.Get("/sessions?from_ms=0&to_ms=1");
  EXPECT_TRUE(parse(r).at("sessions").empty());
}

TEST(Http, NotFoundAndEnrollment) {
  harness::LiveServer srv;
  auto c = srv.client();
  const std::string missing(32, 'a');
  EXPECT_EQ(c.Get("/sessions/" + missing)->status, 404);
  EXPECT_EQ(c.Get("/sessions/" + missing + "/analysis")->status, 404);
  EXPECT_EQ(c.Get("/jobs/job-nope")->status, 404);
  EXPECT_EQ(c.Get("/sessions/not-an-id")->status, 404);

  const std::string id = create(c);
  auto r = c.Post("/sessions/" + id + "/enroll?role=therapist",
                  harness::body_of(fixtures::wav_of(fixtures::enrollment_clip(fixtures::kTherapistVoice, 2.0, 1))),
                  "audio/wav");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(parse(r).at("error"), "too_little_speech");
  r = c.Post("/sessions/" + id + "/enroll?role=client",
             harness::body_of(fixtures::wav_of(fixtures::enrollment_clip(fixtures::kClientVoice, 6.0, 2))),
             "audio/wav");
  EXPECT_EQ(r->status, 200);
  EXPECT_TRUE(parse(r).at("client_enrolled").get<bool>());
  r = c.Post("/sessions/" + id + "/enroll?role=nobody", "", "audio/wav");
  EXPECT_EQ(r->status, 400);
}

TEST(Http, ChunkedUpload) {
  harness::LiveServer srv;
  auto c = srv.client();
  const std::string id = create(c);
  const auto clip = fixtures::two_speaker_session(4.0, 6).clip;
  for (std::size_t off = 0; off < clip.samples.size(); off += 8000) {
    const std::vector<double> part(clip.samples.begin() + static_cast<std::ptrdiff_t>(off),
                                   clip.samples.begin() + static_cast<std::ptrdiff_t>(off + 8000));
    ASSERT_EQ(c.Post("/sessions/" + id + "/recording/chunks", harness::body_of(encode_wav(part, kCanonicalRate)),
                     "audio/wav")
                  ->status,
              200);
  }
  auto r = c.Post("/sessions/" + id + "/recording/stop", "", "application/octet-stream");
  ASSERT_EQ(r->status, 202);
  EXPECT_EQ(wait_for_job(c, parse(r).at("id")).at("state"), "done");
  r = c.Get("/config");
  EXPECT_EQ(parse(r), AnalysisConfig{}.to_json());
}
