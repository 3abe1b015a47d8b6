#include <doctest.h>

#include <fstream>
#include <set>

#include "helpers.hpp"
#include "ramm/corpus_io.hpp"
#include "ramm/image_io.hpp"
#include "ramm/synth.hpp"

using namespace ramm;

TEST_CASE("synth_corpus is a pure function of its config") {
  SynthConfig cfg;
  cfg.n_train = 100;
  cfg.n_heldout_docs = 20;
  cfg.seed = 7;
  SynthCorpus a = synth_corpus(cfg);
  SynthCorpus b = synth_corpus(cfg);
  REQUIRE(a.train.size() == 100);
  CHECK(a.train == b.train);
  CHECK(a.heldout == b.heldout);
}

TEST_CASE("held-out triples are absent from train and counted exactly") {
  SynthConfig cfg;
  cfg.shapes = {"circle", "square", "triangle"};
  cfg.colors = {"red", "green", "blue"};
  cfg.backgrounds = {"white", "black"};
  cfg.n_heldout_compositions = 2;
  cfg.n_train = 200;
  cfg.n_heldout_docs = 10;
  cfg.seed = 3;
  SynthCorpus corpus = synth_corpus(cfg);

  // 3*3*2 = 18 triples; 2 held out, 16 in train.
  CHECK(corpus.train_compositions.size() == 16);
  CHECK(corpus.heldout_compositions.size() == 2);

  std::set<std::string> train_captions;
  for (const Document& d : corpus.train)
    train_captions.insert(*text_part(d));
  CHECK(train_captions.size() == 16);  // n_train >= 16 covers every triple
  for (const Composition& h : corpus.heldout_compositions)
    CHECK(train_captions.count(composition_caption(h)) == 0);
}

TEST_CASE("rendered pixels match the color table") {
  // Caption "a red circle on blue background": center pixel is the red
  // constant, corner pixel is the blue constant, for every jitter.
  const auto red = color_rgb("red");
  const auto blue = color_rgb("blue");
  for (int jx = -1; jx <= 1; ++jx)
    for (int jy = -1; jy <= 1; ++jy)
      for (int shrink = 0; shrink <= 1; ++shrink) {
        Image img =
            render_composition({"circle", "red", "blue"}, 16, jx, jy, shrink);
        const uint8_t* center = img.at(8, 8);
        CHECK(center[0] == red[0]);
        CHECK(center[1] == red[1]);
        CHECK(center[2] == red[2]);
        const uint8_t* corner = img.at(0, 0);
        CHECK(corner[0] == blue[0]);
        CHECK(corner[1] == blue[1]);
        CHECK(corner[2] == blue[2]);
      }
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  SUBCASE("duplicate color name") {
    cfg.colors = {"red", "red"};
    CHECK_THROWS_AS(synth_corpus(cfg), std::invalid_argument);
  }
  SUBCASE("image too small") {
    cfg.image_size = 4;
    CHECK_THROWS_AS(synth_corpus(cfg), std::invalid_argument);
  }
  SUBCASE("too many held-out compositions") {
    cfg.n_heldout_compositions =
        static_cast<int>(cfg.shapes.size() * cfg.colors.size() *
                         cfg.backgrounds.size());
    CHECK_THROWS_AS(synth_corpus(cfg), std::invalid_argument);
  }
  SUBCASE("unknown color name") {
    cfg.colors = {"vermilion"};
    CHECK_THROWS_AS(synth_corpus(cfg), std::invalid_argument);
  }
}

TEST_CASE("classify_nearest_template recovers each clean render") {
  std::vector<Composition> comps;
  for (const char* s : {"circle", "square", "triangle"})
    for (const char* c : {"red", "teal"})
      comps.push_back({s, c, "white"});
  for (const Composition& c : comps) {
    Image img = render_composition(c, 16);
    CHECK(classify_nearest_template(img, comps) == c);
  }
}

TEST_CASE("corpus JSONL round trip is lossless") {
  const auto& w = testing::tiny_world();
  std::string dir = testing::temp_dir("corpus_io");
  std::vector<Document> docs(w.corpus.train.begin(),
                             w.corpus.train.begin() + 100);
  save_corpus(docs, dir + "/c.jsonl");
  std::vector<Document> back = load_corpus(dir + "/c.jsonl");
  CHECK(docs == back);
}

TEST_CASE("empty corpus file loads as empty list") {
  std::string dir = testing::temp_dir("corpus_empty");
  save_corpus({}, dir + "/empty.jsonl");
  CHECK(load_corpus(dir + "/empty.jsonl").empty());
}

TEST_CASE("malformed corpus records name the line number") {
  std::string dir = testing::temp_dir("corpus_bad");
  {
    std::ofstream f(dir + "/bad.jsonl");
    f << document_to_json_line(testing::tiny_world().corpus.train[0]) << "\n";
    f << R"({"id":"x","split":"train","segments":[{"kind":"image","w":16,"h":16}]})"
      << "\n";
  }
  try {
    load_corpus(dir + "/bad.jsonl");
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("png round trip") {
  Image img = render_composition({"triangle", "pink", "navy"}, 16, 1, -1, 1);
  std::string dir = testing::temp_dir("png");
  write_png(dir + "/t.png", img);
  CHECK(read_png(dir + "/t.png") == img);
}

TEST_CASE("base64 round trip including padding lengths") {
  for (size_t len : {0u, 1u, 2u, 3u, 4u, 47u}) {
    std::vector<uint8_t> data(len);
    for (size_t i = 0; i < len; ++i) data[i] = static_cast<uint8_t>(i * 37);
    std::string b64 = base64_encode(data.data(), data.size());
    CHECK(base64_decode(b64) == data);
  }
  CHECK_THROWS(base64_decode("a"));
  CHECK_THROWS(base64_decode("===="));
}
