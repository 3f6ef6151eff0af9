#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lhdff/audio/mel.hpp"
#include "lhdff/audio/wav.hpp"
#include "lhdff/data/corpus.hpp"
#include "lhdff/data/csv.hpp"
#include "lhdff/data/synth.hpp"
#include "lhdff/error.hpp"
#include "lhdff/text.hpp"

using namespace lhdff;
using namespace lhdff::data;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

CorpusManifest manifest_of(std::initializer_list<std::pair<const char*, const char*>> rows) {
  CorpusManifest m;
  for (const auto& [id, cap] : rows) m.records.push_back({id, {cap}});
  return m;
}

}  // namespace

TEST(Csv, QuotedFieldsFollowRfc4180) {
  const auto rows = parse_csv("file_name,caption_1\n\"a.wav\",\"dog, then cat\"\nb.wav,\"say \"\"hi\"\"\"\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].fields, (std::vector<std::string>{"a.wav", "dog, then cat"}));
  EXPECT_EQ(rows[2].fields[1], "say \"hi\"");
  EXPECT_EQ(rows[2].line, 3u);
}

TEST(Csv, EmbeddedNewlineAndCrlf) {
  const auto rows = parse_csv("x,y\r\n\"one\ntwo\",z\r\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].fields[0], "one\ntwo");
  EXPECT_EQ(rows[1].fields[1], "z");
}

TEST(Csv, UnterminatedQuoteReportsLine) {
  try {
    parse_csv("a,b\nc,\"d\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Csv, EscapeRoundTrips) {
  for (const std::string s : {"plain", "with,comma", "with \"quote\"", "multi\nline"}) {
    const auto rows = parse_csv(csv_escape(s) + "\n");
    EXPECT_EQ(rows.at(0).fields.at(0), s);
  }
}

TEST(Manifest, TwoRowsParse) {
  const auto m = parse_manifest_csv("file_name,caption_1,caption_2\na.wav,A dog barks,\"Barking, loud\"\nb.wav,Rain,\n",
                                    "train");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].captions, (std::vector<std::string>{"A dog barks", "Barking, loud"}));
  EXPECT_EQ(m.records[1].captions, (std::vector<std::string>{"Rain"}));
}

TEST(Manifest, DuplicateIdIsNamed) {
  try {
    parse_manifest_csv("file_name,caption_1\nx.wav,a\nx.wav,b\n", "train");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("x.wav"), std::string::npos);
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Manifest, MissingIdColumnAndRaggedRows) {
  EXPECT_THROW(parse_manifest_csv("name,caption_1\na,b\n", "train"), ParseError);
  try {
    parse_manifest_csv("file_name,caption_1\na.wav,x,y\n", "train");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_manifest_csv("file_name,caption_1\na.wav,\n", "train"), ParseError);
}

TEST(Manifest, FileRoundTripAndMissingFile) {
  const auto dir = fresh_dir("lhdff_manifest_test");
  const auto m = manifest_of({{"a.wav", "dog, barking"}, {"b.wav", "say \"hi\""}});
  write_manifest_csv(dir / "m.csv", m);
  const auto back = load_manifest_csv(dir / "m.csv", "train");
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(back.records[0].captions[0], "dog, barking");
  EXPECT_EQ(back.records[1].captions[0], "say \"hi\"");
  EXPECT_THROW(load_manifest_csv(dir / "none.csv", "train"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Vocab, FrequencyThenAlphabetical) {
  const auto v = build_vocab(manifest_of({{"1", "a b"}, {"2", "a"}}));
  EXPECT_EQ(v.id("a"), 4);
  EXPECT_EQ(v.id("b"), 5);
  const auto w = build_vocab(manifest_of({{"1", "z y x"}, {"2", "x"}}));
  EXPECT_EQ(w.token(4), "x");
  EXPECT_EQ(w.token(5), "y");
  EXPECT_EQ(w.token(6), "z");
}

TEST(Vocab, MinCountMapsRareToUnknown) {
  const auto v = build_vocab(manifest_of({{"1", "a b"}, {"2", "a c"}}), 2);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.id("b"), model::Vocabulary::kUnk);
  EXPECT_EQ(v.id("never"), model::Vocabulary::kUnk);
}

TEST(Vocab, EncodeDecodeRoundTrip) {
  const auto v = build_vocab(manifest_of({{"1", "a low tone then clicks"}}));
  const auto words = text::tokenize("A low tone, then clicks.");
  EXPECT_EQ(v.decode(v.encode(words)), words);
  EXPECT_THROW(build_vocab(CorpusManifest{}), ConfigError);
}

TEST(Splits, DisjointnessIsEnforced) {
  auto a = manifest_of({{"1", "x"}, {"2", "y"}});
  auto b = manifest_of({{"3", "x"}, {"2", "y"}});
  a.split = "train";
  b.split = "val";
  try {
    check_disjoint({&a, &b});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'2'"), std::string::npos);
  }
}

TEST(Splits, SplitIsDisjointDeterministicAndKeepsTraining) {
  CorpusManifest m;
  for (int i = 9; i >= 0; --i) m.records.push_back({"clip_" + std::to_string(i), {"x"}});
  const auto s = split_manifest(m, 0.25);
  EXPECT_EQ(s.train.records.size(), 7u);
  EXPECT_EQ(s.val.records.size(), 3u);
  EXPECT_NO_THROW(check_disjoint({&s.train, &s.val}));
  EXPECT_EQ(s.val.records.front().clip_id, "clip_7");
  const auto one = split_manifest(manifest_of({{"a", "x"}}), 0.5);
  EXPECT_EQ(one.train.records.size(), 1u);
  EXPECT_THROW(split_manifest(m, 1.0), ConfigError);
}

TEST(Synth, CaptionContainsEventLexemes) {
  SceneSpec spec;
  spec.events = {{EventKind::kLowTone, 1.0, 200.0}, {EventKind::kClickTrain, 1.0, 0.0, 0.0, 8.0, 0.5}};
  for (std::size_t v = 0; v < 5; ++v) {
    const auto words = text::tokenize(scene_caption(spec, v));
    EXPECT_NE(std::find(words.begin(), words.end(), "tone"), words.end()) << scene_caption(spec, v);
    EXPECT_NE(std::find(words.begin(), words.end(), "clicks"), words.end()) << scene_caption(spec, v);
  }
  EXPECT_NE(scene_caption(spec, 0), scene_caption(spec, 1));
}

TEST(Synth, SampledScenesRespectCatalogBounds) {
  for (std::size_t i = 0; i < 100; ++i) {
    auto rng = clip_rng(3, i);
    const auto spec = sample_scene(rng);
    EXPECT_GE(spec.events.size(), 2u);
    EXPECT_LE(spec.events.size(), 4u);
    EXPECT_GE(spec.duration(), 2.0 - 1e-9);
    EXPECT_LE(spec.duration(), 6.0 + 1e-9);
    for (std::size_t e = 1; e < spec.events.size(); ++e) EXPECT_NE(spec.events[e].kind, spec.events[e - 1].kind);
  }
}

TEST(Synth, ClipsAreDeterministic) {
  const auto a = generate_clip(7, 3, 5), b = generate_clip(7, 3, 5);
  EXPECT_EQ(a.audio.samples, b.audio.samples);
  EXPECT_EQ(a.record.captions, b.record.captions);
  EXPECT_EQ(a.record.captions.size(), 5u);
  EXPECT_EQ(a.audio.samples.size(), static_cast<std::size_t>(std::llround(a.spec.duration() * kSynthRate)));
  EXPECT_NE(generate_clip(7, 4, 1).audio.samples, a.audio.samples);
}

TEST(Synth, CorpusFilesAreByteIdentical) {
  const auto d1 = fresh_dir("lhdff_gen_a"), d2 = fresh_dir("lhdff_gen_b");
  generate_corpus(d1, 8, 2, 7);
  generate_corpus(d2, 8, 2, 7);
  EXPECT_EQ(slurp(d1 / "manifest.csv"), slurp(d2 / "manifest.csv"));
  for (int i = 0; i < 8; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%04d.wav", i);
    EXPECT_EQ(slurp(d1 / "wav" / name), slurp(d2 / "wav" / name)) << name;
  }
  const auto m = load_manifest_csv(d1 / "manifest.csv", "train");
  const auto clips = load_clips(m, d1 / "wav", audio::MelConfig{});
  ASSERT_EQ(clips.size(), 8u);
  EXPECT_EQ(clips[0].captions.size(), 2u);
  EXPECT_EQ(clips[0].mel.bins, 64u);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(Synth, MissingWavSurfacesPath) {
  const auto dir = fresh_dir("lhdff_missing_wav");
  try {
    load_clips(manifest_of({{"nope.wav", "x"}}), dir, audio::MelConfig{});
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.wav"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

// Nearest filter centre computed from the HTK formula directly.
TEST(Synth, ToneLandsInItsMelBand) {
  const audio::MelConfig cfg;
  const double lo = 2595.0 * std::log10(1.0 + cfg.fmin / 700.0);
  const double hi = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  for (double freq : {180.0, 440.0, 1500.0, 3000.0}) {
    SceneSpec spec;
    spec.events = {{EventKind::kHighTone, 1.0, freq, 0.0, 0.0, 0.5}};
    auto rng = clip_rng(1, 0);
    const auto mel = audio::log_mel(render_scene(spec, rng), cfg);
    const double target = 2595.0 * std::log10(1.0 + freq / 700.0);
    std::size_t expected = 0;
    double best = INFINITY;
    for (std::size_t f = 0; f < 64; ++f) {
      const double centre = lo + (hi - lo) * static_cast<double>(f + 1) / 65.0;
      if (std::abs(centre - target) < best) {
        best = std::abs(centre - target);
        expected = f;
      }
    }
    for (std::size_t t = 3; t + 3 < mel.frames; ++t) {
      const auto row = std::span(mel.values).subspan(t * 64, 64);
      EXPECT_EQ(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()), expected)
          << freq << " Hz, frame " << t;
    }
  }
}
