#include "alignkit/inference.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "alignkit/error.hpp"
#include "alignkit/random.hpp"
#include "test_support.hpp"

namespace alignkit::inference {
namespace {

using alignkit::testing::Element;
using alignkit::testing::FixtureDir;
using alignkit::testing::kRecordedExpectedScore;
using alignkit::testing::Sample;
using alignkit::testing::ScratchDir;

MockBackend::Row Row(std::string_view alphabet, const std::vector<double>& values) {
  MockBackend::Row row;
  for (std::size_t i = 0; i < alphabet.size(); ++i) row.logits[alphabet[i]] = values[i];
  return row;
}

MockBackend::Row Delta(std::string_view alphabet, char at, double peak = 60.0) {
  MockBackend::Row row;
  for (char c : alphabet) row.logits[c] = c == at ? peak : 0.0;
  return row;
}

MockBackend::Row Uniform(std::string_view alphabet) {
  return Row(alphabet, std::vector<double>(alphabet.size(), 0.0));
}

Json RecordedResponse() {
  return Json::parse(ReadTextFile(FixtureDir() / "recorded_total_response.json"));
}

BackendRequest TotalRequest() {
  BackendRequest req;
  req.system_text = "s";
  req.user_text = "u";
  req.image_ref = "images/x.png";
  req.alphabet = std::string(codec::kRatingAlphabet);
  req.sample_id = "x";
  return req;
}

TEST(RequestHash, StableAndSensitive) {
  auto a = TotalRequest();
  const auto h = RequestHash(a);
  EXPECT_EQ(h.size(), 64u);
  EXPECT_EQ(RequestHash(a), h);
  a.sample_id = "other";  // routing metadata is not hashed
  EXPECT_EQ(RequestHash(a), h);
  a.user_text += " ";
  EXPECT_NE(RequestHash(a), h);
}

TEST(MockBackend, LookupOrder) {
  MockBackend mock;
  auto req = TotalRequest();
  EXPECT_THROW(mock.Query(req), Error);
  mock.SetFallback(Delta(req.alphabet, 'a'));
  EXPECT_DOUBLE_EQ(mock.Query(req).labels.at('a'), 60.0);
  mock.AddBySample("x", Task::kTotal, std::nullopt, Delta(req.alphabet, 'b'));
  EXPECT_DOUBLE_EQ(mock.Query(req).labels.at('b'), 60.0);
  mock.AddByHash(RequestHash(req), Delta(req.alphabet, 'c'));
  EXPECT_DOUBLE_EQ(mock.Query(req).labels.at('c'), 60.0);
}

TEST(MockBackend, FromFile) {
  const auto dir = ScratchDir("mock_from_file");
  WriteTextFile(dir / "t.jsonl",
                "{\"sample_id\": \"s1\", \"task\": \"element\", \"element_name\": \"dog (object)\", "
                "\"logits\": {\"1\": 0, \"7\": 5}}\n"
                "{\"request_hash\": \"*\", \"logits\": {\"a\": 1.5}}\n");
  auto mock = MockBackend::FromFile(dir / "t.jsonl");
  BackendRequest el;
  el.alphabet = std::string(codec::kElementAlphabet);
  el.sample_id = "s1";
  el.task = Task::kElement;
  el.element_name = "dog (object)";
  const auto scores = mock.Query(el);
  EXPECT_EQ(scores.labels.size(), 2u);
  EXPECT_DOUBLE_EQ(scores.labels.at('7'), 5.0);
  EXPECT_DOUBLE_EQ(mock.Query(TotalRequest()).labels.at('a'), 1.5);

  WriteTextFile(dir / "bad.jsonl", "{\"logits\": {\"a\": 1}}\n");
  EXPECT_THROW(MockBackend::FromFile(dir / "bad.jsonl"), Error);
  EXPECT_THROW(MockBackend::FromFile(dir / "absent.jsonl"), Error);
}

TEST(QueryClosedSetLogits, PartialTopKGetsFloor) {
  MockBackend mock;
  MockBackend::Row row;
  row.logits = {{'c', -1.0}, {'d', -2.5}};
  mock.SetFallback(row);
  const auto logits = QueryClosedSetLogits(mock, TotalRequest());
  ASSERT_EQ(logits.size(), 15u);
  EXPECT_DOUBLE_EQ(logits[2], -1.0);
  EXPECT_DOUBLE_EQ(logits[3], -2.5);
  EXPECT_DOUBLE_EQ(logits[0], -12.5);
  EXPECT_DOUBLE_EQ(logits[14], -12.5);
  for (double v : logits) EXPECT_TRUE(std::isfinite(v));
}

TEST(QueryClosedSetLogits, Rejections) {
  MockBackend mock;
  MockBackend::Row row;
  row.logits = {{'z', -1.0}};
  mock.SetFallback(row);
  try {
    QueryClosedSetLogits(mock, TotalRequest());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBackend);
  }
  auto req = TotalRequest();
  req.alphabet = "aab";
  EXPECT_THROW(QueryClosedSetLogits(mock, req), Error);
}

TEST(ParseTopLogprobs, RecordedResponse) {
  const auto scores = ParseTopLogprobs(RecordedResponse(), codec::kRatingAlphabet);
  EXPECT_EQ(scores.labels.size(), 13u);  // a and b were not reported
  EXPECT_DOUBLE_EQ(scores.labels.at('l'), -0.6931);
  EXPECT_DOUBLE_EQ(scores.min_reported, -12.6761);
  EXPECT_EQ(scores.labels.count('L'), 0u);
}

TEST(ParseTopLogprobs, LegacyAndMalformed) {
  const auto legacy = Json::parse(R"({"choices":[{"logprobs":{"top_logprobs":[{"3":-0.1,"4":-2.0,"x":-9}]}}]})");
  const auto scores = ParseTopLogprobs(legacy, codec::kElementAlphabet);
  EXPECT_EQ(scores.labels.size(), 2u);
  EXPECT_DOUBLE_EQ(scores.min_reported, -9.0);
  EXPECT_THROW(ParseTopLogprobs(Json::parse(R"({"choices":[]})"), "abc"), Error);
  EXPECT_THROW(ParseTopLogprobs(Json::parse(R"({"error":"x"})"), "abc"), Error);
}

class RecordedServer : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      last_body_ = req.body;
      if (fail_with_ != 0) {
        res.status = fail_with_;
        return;
      }
      res.set_content(RecordedResponse().dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  HttpBackendConfig Config() const {
    HttpBackendConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    cfg.model = "judge";
    cfg.image_mode = "url";
    cfg.image_url_prefix = "http://images.local/";
    cfg.timeout_ms = 2000;
    cfg.retry_backoff_ms = 1;
    return cfg;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::atomic<int> fail_with_{0};
  std::string last_body_;
};

TEST_F(RecordedServer, ExpectedScoreMatchesOracle) {
  HttpBackend backend(Config());
  auto sample = Sample("rec");
  const auto p = PredictTotalScore(backend, sample, std::nullopt, {});
  EXPECT_NEAR(p.continuous_score, kRecordedExpectedScore, 1e-9);
  EXPECT_EQ(p.argmax_label, 'l');
  EXPECT_EQ(hits_.load(), 1);

  const auto body = Json::parse(last_body_);
  EXPECT_EQ(body["model"], "judge");
  EXPECT_EQ(body["max_tokens"], 1);
  EXPECT_EQ(body["logprobs"], true);
  EXPECT_EQ(body["top_logprobs"], 20);
  EXPECT_EQ(body["messages"][1]["content"][0]["image_url"]["url"], "http://images.local/images/rec.png");
}

TEST_F(RecordedServer, MockTableGivesSameScore) {
  // The same recorded numbers replayed through a table row.
  MockBackend mock;
  MockBackend::Row row;
  const auto response = RecordedResponse();
  for (const auto& t : response["choices"][0]["logprobs"]["content"][0]["top_logprobs"]) {
    const auto token = t["token"].get<std::string>();
    const double lp = t["logprob"].get<double>();
    if (token.size() == 1) {
      auto [it, inserted] = row.logits.emplace(token[0], lp);
      if (!inserted) it->second = std::max(it->second, lp);
    }
  }
  mock.SetFallback(row);
  const auto p = PredictTotalScore(mock, Sample("rec"), std::nullopt, {});
  EXPECT_NEAR(p.continuous_score, kRecordedExpectedScore, 1e-9);
}

TEST_F(RecordedServer, ServerErrorIsRetryable) {
  fail_with_ = 503;
  auto cfg = Config();
  cfg.attempts = 3;
  HttpBackend backend(cfg);
  try {
    backend.Query(TotalRequest());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBackend);
    EXPECT_TRUE(e.retryable());
  }
  EXPECT_EQ(hits_.load(), 3);
}

TEST_F(RecordedServer, ClientErrorIsNotRetried) {
  fail_with_ = 400;
  HttpBackend backend(Config());
  try {
    backend.Query(TotalRequest());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBackend);
    EXPECT_FALSE(e.retryable());
  }
  EXPECT_EQ(hits_.load(), 1);
}

TEST(HttpBackend, UnreachableHost) {
  HttpBackendConfig cfg;
  cfg.base_url = "http://127.0.0.1:1/v1";
  cfg.attempts = 2;
  cfg.retry_backoff_ms = 1;
  cfg.timeout_ms = 500;
  cfg.image_mode = "url";
  HttpBackend backend(cfg);
  try {
    backend.Query(TotalRequest());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBackend);
    EXPECT_TRUE(e.retryable());
  }
}

TEST(HttpBackend, Base64ImageAndMissingFile) {
  const auto dir = ScratchDir("http_base64");
  image::WritePng(alignkit::testing::Gradient(4, 4), dir / "images/x.png");
  HttpBackendConfig cfg;
  cfg.base_url = "http://127.0.0.1:1/v1";
  cfg.image_root = dir;
  HttpBackend backend(cfg);
  const auto body = backend.BuildRequestBody(TotalRequest());
  const auto url = body["messages"][1]["content"][0]["image_url"]["url"].get<std::string>();
  EXPECT_EQ(url.rfind("data:image/png;base64,", 0), 0u);
  auto req = TotalRequest();
  req.image_ref = "images/absent.png";
  EXPECT_THROW(backend.BuildRequestBody(req), Error);
}

TEST(PredictTotalScore, UniformAndDelta) {
  MockBackend mock;
  mock.SetFallback(Uniform(codec::kRatingAlphabet));
  auto p = PredictTotalScore(mock, Sample("u"), std::nullopt, {});
  EXPECT_NEAR(p.continuous_score, 3.0, 1e-12);
  EXPECT_EQ(p.argmax_label, 'a');

  MockBackend peak;
  peak.SetFallback(Delta(codec::kRatingAlphabet, 'o'));
  p = PredictTotalScore(peak, Sample("d"), std::nullopt, {});
  EXPECT_NEAR(p.continuous_score, 5.0, 1e-9);
  EXPECT_EQ(p.argmax_label, 'o');
}

TEST(PredictTotalScore, ShiftInvariance) {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> values(15);
    for (auto& v : values) v = rng.Uniform(-8.0, 8.0);
    std::vector<double> shifted = values;
    const double c = rng.Uniform(-50.0, 50.0);
    for (auto& v : shifted) v += c;
    MockBackend a, b;
    a.SetFallback(Row(codec::kRatingAlphabet, values));
    b.SetFallback(Row(codec::kRatingAlphabet, shifted));
    const auto pa = PredictTotalScore(a, Sample("s"), std::nullopt, {});
    const auto pb = PredictTotalScore(b, Sample("s"), std::nullopt, {});
    EXPECT_NEAR(pa.continuous_score, pb.continuous_score, 1e-9);
    EXPECT_GE(pa.continuous_score, 1.0);
    EXPECT_LE(pa.continuous_score, 5.0);
  }
}

TEST(PredictElementScores, HitsAndOrder) {
  auto sample = Sample("e");
  sample.elements = {Element("red", "attribute", 0.1), Element("dog", "object", 0.9)};
  MockBackend mock;
  mock.AddBySample("e", Task::kElement, "dog", Delta(codec::kElementAlphabet, '7'));
  mock.AddBySample("e", Task::kElement, "red", Delta(codec::kElementAlphabet, '3'));
  const auto preds = PredictElementScores(mock, sample, 3, {});
  ASSERT_EQ(preds.size(), 2u);
  EXPECT_EQ(preds[0].element_name, "dog");
  EXPECT_EQ(preds[0].argmax_label, '7');
  EXPECT_EQ(preds[0].hit, true);
  EXPECT_NEAR(preds[0].continuous_score, 7.0, 1e-9);
  EXPECT_EQ(preds[1].element_name, "red");
  EXPECT_EQ(preds[1].hit, false);
  EXPECT_EQ(PredictedCategory(preds[1], HitMode::kExpected).digit(), 3);

  sample.elements.clear();
  EXPECT_THROW(PredictElementScores(mock, sample, 3, {}), Error);
}

TEST(PredictionHit, Modes) {
  Prediction p;
  p.task = Task::kElement;
  p.argmax_label = '3';
  p.continuous_score = 3.4;
  EXPECT_FALSE(PredictionHit(p, 3, HitMode::kArgmax));
  EXPECT_TRUE(PredictionHit(p, 3, HitMode::kExpected));
  EXPECT_EQ(ParseHitMode("expected"), HitMode::kExpected);
  EXPECT_THROW(ParseHitMode("median"), Error);
}

TEST(Predictions, FileRoundTrip) {
  const auto dir = ScratchDir("predictions_io");
  MockBackend mock;
  mock.SetFallback(Row(codec::kRatingAlphabet, {0, 1, 2, 3, 4, 5, 6, 7, 6, 5, 4, 3, 2, 1, 0}));
  std::vector<Prediction> preds;
  for (int i = 0; i < 5; ++i) preds.push_back(PredictTotalScore(mock, Sample("s" + std::to_string(i)), std::nullopt, {}));
  WritePredictions(dir / "p.jsonl", preds);
  EXPECT_EQ(ReadPredictions(dir / "p.jsonl"), preds);

  WriteTextFile(dir / "bad.jsonl", "{\"sample_id\": \"a\", \"task\": \"total\", \"continuous_score\": 9}\n");
  EXPECT_THROW(ReadPredictions(dir / "bad.jsonl"), Error);
}

}  // namespace
}  // namespace alignkit::inference
