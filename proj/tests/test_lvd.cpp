#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "iclv/error.hpp"
#include "iclv/lvd.hpp"
#include "iclv/text.hpp"
#include "support.hpp"

using namespace iclv;
using namespace iclv::lvd;
using iclv::testing::data_path;

namespace {

std::vector<std::filesystem::path> fixtures(const std::string& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(data_path(dir))) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

LvdRecord random_record(std::mt19937_64& rng) {
  const auto pick = [&](std::size_t n) { return static_cast<int>(rng() % n); };
  LvdRecord r;
  r.lane_type = static_cast<LaneType>(pick(3));
  r.separation = static_cast<Separation>(pick(3));
  r.traffic_signal = static_cast<TrafficSignal>(pick(4));
  const std::vector<std::string> signs = {"stop", "yield", "bike lane", "speed limit"};
  for (const auto& s : signs)
    if (pick(2)) r.signage.push_back(s);
  for (auto& p : r.vehicle_proximity) p = static_cast<Proximity>(pick(4));
  for (auto& p : r.pedestrian_proximity) p = static_cast<Proximity>(pick(4));
  r.road_condition = static_cast<Quality>(pick(3));
  r.potholes = static_cast<Presence>(pick(2));
  r.pedestrian_activity = static_cast<Level>(pick(3));
  r.obstructions = static_cast<Presence>(pick(2));
  r.weather = static_cast<Weather>(pick(2));
  r.stress_level = static_cast<Level>(pick(3));
  r.stress_description = pick(2) ? "Buses merging near the stop." : "Calm street, wide lane.";
  r.special_events = static_cast<Presence>(pick(2));
  r.road_works = static_cast<Presence>(pick(2));
  r.other_cyclists = static_cast<Proximity>(pick(4));
  r.cyclist_infrastructure = static_cast<Quality>(pick(3));
  return r;
}

}  // namespace

TEST(ParseResponse, EveryValidFixtureIsComplete) {
  const auto files = fixtures("lvd/valid");
  ASSERT_GE(files.size(), 5u);
  for (const auto& f : files) {
    const auto r = parse_response(text::read_file(f.string()));
    EXPECT_TRUE(r.record.has_value()) << f;
    EXPECT_TRUE(r.diagnostics.empty()) << f << ": " << (r.diagnostics.empty() ? "" : r.diagnostics[0].message);
  }
}

TEST(ParseResponse, PlainFixtureValues) {
  const auto r = parse_response(text::read_file(data_path("lvd/valid/01_plain.txt")));
  ASSERT_TRUE(r.record);
  const auto& x = *r.record;
  EXPECT_EQ(x.lane_type, LaneType::dedicated);
  EXPECT_EQ(x.separation, Separation::physical);
  EXPECT_EQ(x.traffic_signal, TrafficSignal::green);
  EXPECT_EQ(x.signage, (std::vector<std::string>{"bike lane", "stop"}));
  EXPECT_EQ(x.vehicle_proximity[0], Proximity::high);
  EXPECT_EQ(x.vehicle_proximity[1], Proximity::low);
  EXPECT_EQ(x.vehicle_proximity[2], Proximity::not_present);
  EXPECT_EQ(x.vehicle_proximity[3], Proximity::medium);
  EXPECT_EQ(x.pedestrian_proximity[0], Proximity::low);
  EXPECT_EQ(x.road_condition, Quality::good);
  EXPECT_EQ(x.stress_description, "Dense car traffic on the left but a protected lane.");
  EXPECT_EQ(x.cyclist_infrastructure, Quality::good);
}

TEST(ParseResponse, InlineGroupsAndSnakeCase) {
  const auto r = parse_response(text::read_file(data_path("lvd/valid/03_inline_groups.txt")));
  ASSERT_TRUE(r.record);
  EXPECT_EQ(r.record->lane_type, LaneType::does_not_exist);
  EXPECT_EQ(r.record->traffic_signal, TrafficSignal::not_identifiable);
  EXPECT_TRUE(r.record->signage.empty());
  EXPECT_EQ(r.record->vehicle_proximity[0], Proximity::low);
  EXPECT_EQ(r.record->pedestrian_proximity[2], Proximity::low);
  EXPECT_EQ(r.record->potholes, Presence::present);
}

TEST(ParseResponse, NumberedItemsWithNestedHeaders) {
  const auto r = parse_response(text::read_file(data_path("lvd/valid/05_headers.txt")));
  ASSERT_TRUE(r.record);
  EXPECT_EQ(r.record->vehicle_proximity[0], Proximity::medium);
  EXPECT_EQ(r.record->vehicle_proximity[1], Proximity::low);
  EXPECT_EQ(r.record->pedestrian_proximity[1], Proximity::medium);
  EXPECT_EQ(r.record->weather, Weather::cloudy);
  EXPECT_EQ(r.record->special_events, Presence::present);
}

TEST(ParseResponse, OutOfVocabularyFixturesAreDiagnosed) {
  const std::map<std::string, std::vector<std::string>> expected = {
      {"01_yellow_signal.txt", {"traffic_signal"}},
      {"02_rainy_weather.txt", {"weather"}},
      {"03_truck_very_high.txt", {"vehicle_proximity.truck"}},
      {"04_two_fields.txt", {"road_condition", "stress_level"}},
  };
  for (const auto& f : fixtures("lvd/invalid")) {
    const auto body = text::read_file(f.string());
    const auto r = parse_response(body);
    EXPECT_FALSE(r.record.has_value()) << f;
    std::vector<std::string> oov;
    for (const auto& d : r.diagnostics)
      if (d.kind == Diagnostic::Kind::out_of_vocabulary) oov.push_back(d.field);
    EXPECT_EQ(oov, expected.at(f.filename().string())) << f;

    ParseOptions neutral;
    neutral.fallback = Fallback::neutral;
    const auto n = parse_response(body, neutral);
    ASSERT_TRUE(n.record.has_value()) << f;
    EXPECT_EQ(n.diagnostics.size(), r.diagnostics.size());
  }
}

TEST(ParseResponse, NeutralLevels) {
  ParseOptions neutral;
  neutral.fallback = Fallback::neutral;
  const auto r = parse_response("TrafficSignal: Yellow\nWeatherCondition: Rainy\nRoadCondition: good\n", neutral);
  ASSERT_TRUE(r.record);
  EXPECT_EQ(r.record->traffic_signal, TrafficSignal::not_identifiable);
  EXPECT_EQ(r.record->weather, Weather::sunny);
  EXPECT_EQ(r.record->road_condition, Quality::good);
  EXPECT_EQ(r.record->stress_level, Level::medium);
}

TEST(ParseResponse, EmptyTextHasNoFields) {
  for (const std::string body : {"", "I cannot help with that.", "\n\n   \n"}) {
    const auto r = parse_response(body, {Fallback::neutral});
    EXPECT_FALSE(r.record.has_value());
    ASSERT_EQ(r.diagnostics.size(), 1u);
    EXPECT_EQ(r.diagnostics[0].kind, Diagnostic::Kind::no_fields);
    EXPECT_EQ(r.diagnostics[0].message, "no fields found");
  }
}

TEST(ParseResponse, MissingFieldsReported) {
  const auto r = parse_response("LaneType: shared\n");
  EXPECT_FALSE(r.record.has_value());
  std::size_t missing = 0;
  for (const auto& d : r.diagnostics) missing += d.kind == Diagnostic::Kind::missing;
  EXPECT_EQ(missing, field_names().size() - 1);
}

TEST(ParseResponse, ConflictingDuplicate) {
  auto body = render(LvdRecord{}) + "LaneType: shared\n";
  const auto r = parse_response(body);
  ASSERT_FALSE(r.diagnostics.empty());
  EXPECT_EQ(r.diagnostics[0].kind, Diagnostic::Kind::duplicate);
  EXPECT_EQ(r.diagnostics[0].field, "lane_type");
}

TEST(Render, RoundTripIsIdentity) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 500; ++k) {
    const auto r = random_record(rng);
    const auto p = parse_response(render(r));
    ASSERT_TRUE(p.record) << render(r);
    EXPECT_EQ(*p.record, r);
    EXPECT_TRUE(p.diagnostics.empty());
  }
}

TEST(Vocabulary, FieldValues) {
  LvdRecord r;
  r.traffic_signal = TrafficSignal::not_identifiable;
  EXPECT_EQ(field_value(r, "traffic_signal"), "Not identifiable");
  EXPECT_EQ(field_value(r, "signage"), "none");
  EXPECT_EQ(vocabulary("weather"), (std::vector<std::string>{"Sunny", "Cloudy"}));
  EXPECT_THROW(field_value(r, "colour"), DataError);
}

TEST(Covariates, DefaultRules) {
  LvdRecord r;
  auto c = to_covariates(r);
  for (const auto& [k, v] : c) EXPECT_EQ(v, 0.0) << k;
  EXPECT_EQ(c.size(), default_rules().size());

  r.vehicle_proximity[2] = Proximity::high;
  r.traffic_signal = TrafficSignal::red;
  r.special_events = Presence::present;
  r.cyclist_infrastructure = Quality::poor;
  c = to_covariates(r);
  EXPECT_EQ(c.at("high_vehicular_activity"), 1.0);
  EXPECT_EQ(c.at("red_light"), 1.0);
  EXPECT_EQ(c.at("stressful_situation"), 1.0);
  EXPECT_EQ(c.at("bad_infrastructure"), 1.0);
  EXPECT_EQ(c.at("cloudy"), 0.0);
  EXPECT_EQ(c.at("high_pedestrians_activity"), 0.0);
}

TEST(Covariates, CustomRules) {
  const auto rules = parse_rules("busy = pedestrian_activity:High | other_cyclists:High\nworks = road_works:Present\n");
  ASSERT_EQ(rules.size(), 2u);
  LvdRecord r;
  r.other_cyclists = Proximity::high;
  const auto c = to_covariates(r, rules);
  EXPECT_EQ(c.at("busy"), 1.0);
  EXPECT_EQ(c.at("works"), 0.0);
  EXPECT_THROW(parse_rules("x = weather:Rainy\n"), DataError);
  EXPECT_THROW(parse_rules("x = colour:Red\n"), DataError);
}

TEST(Records, CsvRoundTrip) {
  std::mt19937_64 rng(8);
  std::vector<LvdRecord> recs;
  for (int k = 0; k < 20; ++k) {
    auto r = random_record(rng);
    r.individual_id = "p" + std::to_string(k % 3);
    r.window = k;
    r.sequence_id = r.individual_id + "_w" + std::to_string(k);
    if (k % 4) {
      r.lat = -33.45 + 0.001 * k;
      r.lon = -70.66 - 0.0007 * k;
    }
    r.stress_description = k % 2 ? "Comma, \"quoted\" text" : "";
    recs.push_back(r);
  }
  EXPECT_EQ(records_from_csv(records_to_csv(recs)), recs);
}

TEST(Join, MatchesOnIndividualAndWindow) {
  std::vector<ObservationRow> rows;
  for (long long t = 1; t <= 4; ++t) {
    ObservationRow r;
    r.individual_id = "a";
    r.t = t;
    r.travel_time = static_cast<double>(t);
    r.action = Action::maintain;
    rows.push_back(r);
  }
  const PanelDataset ds(rows);
  LvdRecord red;
  red.individual_id = "a";
  red.window = 2;
  red.traffic_signal = TrafficSignal::red;
  LvdRecord other = red;
  other.individual_id = "b";
  JoinReport rep;
  const auto out = join_covariates(ds, {red, other}, &rep);
  EXPECT_EQ(rep.matched, 1u);
  EXPECT_EQ(rep.unmatched.size(), 3u);
  EXPECT_EQ(out[1].gpt.at("red_light"), 1.0);
  EXPECT_EQ(out[0].gpt.count("red_light"), 0u);
}

TEST(Sequences, OneFramePerSecond) {
  std::vector<FrameFile> frames;
  for (int i = 0; i < 10; ++i) frames.push_back({"f" + std::to_string(i) + ".jpg", static_cast<double>(i), {}, {}});
  const auto s = extract_sequences(frames, 2);
  ASSERT_EQ(s.sequences.size(), 2u);
  for (const auto& q : s.sequences) EXPECT_EQ(q.frames.size(), 2u);
  EXPECT_EQ(s.sequences[0].window, 0);
  EXPECT_EQ(s.sequences[1].window, 1);
  for (const auto& q : s.sequences) {
    EXPECT_NE(q.frames[0].path, q.frames[1].path);
    for (const auto& f : q.frames) EXPECT_EQ(static_cast<long long>(f.timestamp) / 5, q.window);
  }
  EXPECT_TRUE(s.empty_windows.empty());
}

TEST(Sequences, GapLeavesEmptyWindow) {
  std::vector<FrameFile> frames;
  for (int i : {0, 1, 2, 3, 4, 10, 11, 12, 13, 14}) frames.push_back({"f", static_cast<double>(i), {}, {}});
  const auto s = extract_sequences(frames, 4);
  ASSERT_EQ(s.sequences.size(), 2u);
  EXPECT_EQ(s.sequences[1].window, 2);
  EXPECT_EQ(s.empty_windows, std::vector<long long>{1});
  EXPECT_EQ(s.sequences[0].frames.size(), 4u);
}

TEST(Sequences, JitterDoesNotMoveFrames) {
  std::mt19937_64 rng(5);
  std::vector<FrameFile> frames;
  for (int i = 0; i < 30; ++i)
    frames.push_back({std::to_string(i), i + std::uniform_real_distribution<double>(-0.2, 0.2)(rng), {}, {}});
  std::shuffle(frames.begin(), frames.end(), rng);
  const auto s = extract_sequences(frames, 5, 0.0);
  ASSERT_EQ(s.sequences.size(), 6u);
  for (const auto& q : s.sequences) {
    ASSERT_EQ(q.frames.size(), 5u);
    for (const auto& f : q.frames) EXPECT_EQ(std::stoi(f.path) / 5, q.window);
  }
}

TEST(Heatmap, CountsPerCellAndConservation) {
  std::vector<LvdRecord> recs;
  const auto add = [&](double lat, double lon, bool red) {
    LvdRecord r;
    r.lat = lat;
    r.lon = lon;
    r.traffic_signal = red ? TrafficSignal::red : TrafficSignal::green;
    recs.push_back(r);
  };
  for (int k = 0; k < 3; ++k) add(-33.4500 + 1e-5 * k, -70.6500 + 1e-5 * k, true);
  add(-33.4400, -70.6400, true);
  add(-33.4450, -70.6450, false);
  LvdRecord nocoord;
  nocoord.traffic_signal = TrafficSignal::red;
  recs.push_back(nocoord);

  const auto r = heatmap(recs, "red_light", 50.0);
  EXPECT_EQ(r.at(0, 0), 3.0);
  EXPECT_EQ(r.at(r.nrows - 1, r.ncols - 1), 1.0);
  EXPECT_EQ(r.total(), 4.0);
  EXPECT_EQ(r.flagged, 4u);
  EXPECT_EQ(r.skipped_without_coordinates, 1u);
  // About 1.11 km north-south at 50 m cells.
  EXPECT_NEAR(static_cast<double>(r.nrows), 1112.0 / 50.0, 1.5);

  const auto grid = raster_to_ascii_grid(r);
  EXPECT_EQ(grid.rfind("ncols " + std::to_string(r.ncols), 0), 0u);
  EXPECT_NE(raster_sidecar(r, "red_light").find("\"variable\": \"red_light\""), std::string::npos);

  try {
    heatmap(recs, "purple_cars", 50.0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("red_light"), std::string::npos);
  }
}

TEST(Prompt, ExactAndDefault) {
  EXPECT_EQ(default_prompt(true), std::string(base_prompt()));
  EXPECT_GT(default_prompt().size(), base_prompt().size());
  EXPECT_EQ(default_prompt().rfind(std::string(base_prompt()), 0), 0u);
}
