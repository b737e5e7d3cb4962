#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "versnet/errors.hpp"
#include "versnet/image_io.hpp"

using namespace versnet;
using test_support::TempDir;

TEST(LabelIo, RoundTrip) {
  TempDir dir("lbl");
  Prng rng(1);
  LabelImage l(13, 29);
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<std::uint8_t>(1 + rng.below(12));
  save_label(l, (dir / "a.pgm").string());
  EXPECT_EQ(load_label((dir / "a.pgm").string()), l);
}

TEST(LabelIo, OutOfAlphabetValue) {
  TempDir dir("badlbl");
  test_support::write_text(dir / "b.pgm", std::string("P5\n2 1\n255\n") + char(3) + char(13));
  EXPECT_THROW(load_label((dir / "b.pgm").string()), InvalidLabel);
  test_support::write_text(dir / "z.pgm", std::string("P5\n1 1\n255\n") + char(0));
  EXPECT_THROW(load_label((dir / "z.pgm").string()), InvalidLabel);
}

TEST(ImageIo, SixteenBitQuantization) {
  TempDir dir("img16");
  const SarImage half(7, 9, 0.5f);
  save_image(half, (dir / "h.pgm").string(), 16);
  const SarImage back = load_image((dir / "h.pgm").string());
  ASSERT_EQ(back.height(), 7u);
  for (float v : back.pixels().data()) EXPECT_LE(std::abs(v - 0.5f), 1.0f / 65535.0f);

  Prng rng(2);
  SarImage rnd(20, 20);
  for (auto& v : rnd.pixels().data()) v = static_cast<float>(rng.uniform());
  for (int bits : {8, 16}) {
    save_image(rnd, (dir / "r.pgm").string(), bits);
    const SarImage r = load_image((dir / "r.pgm").string());
    const float lsb = 1.0f / static_cast<float>((1 << bits) - 1);
    for (std::size_t i = 0; i < 400; ++i) {
      EXPECT_LE(std::abs(r.pixels()[i] - rnd.pixels()[i]), 0.5f * lsb + 1e-6f);
    }
  }
  EXPECT_THROW(save_image(rnd, (dir / "x.pgm").string(), 12), InvalidArgument);
}

TEST(ImageIo, AsciiVariant) {
  const GrayRaster g = parse_pgm(std::vector<std::uint8_t>{'P', '2', '\n', '#', 'c', '\n', '2', ' ', '1', '\n',
                                                          '4', '\n', '0', ' ', '4', '\n'});
  EXPECT_EQ(g.width, 2u);
  EXPECT_EQ(g.maxval, 4u);
  EXPECT_EQ(g.samples, (std::vector<std::uint16_t>{0, 4}));
}

TEST(ImageIo, MalformedInputsReportOffset) {
  const std::string truncated = "P5\n64 ";
  try {
    parse_pgm(std::vector<std::uint8_t>(truncated.begin(), truncated.end()));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
  const std::string short_data = "P5\n4 4\n255\nab";
  EXPECT_THROW(parse_pgm(std::vector<std::uint8_t>(short_data.begin(), short_data.end())), ParseError);
  const std::string bad_magic = "P7\n1 1\n255\n0";
  EXPECT_THROW(parse_pgm(std::vector<std::uint8_t>(bad_magic.begin(), bad_magic.end())), ParseError);
  EXPECT_THROW(load_image("/nonexistent/dir/x.pgm"), IoError);
}

TEST(Palette, DistinctAndRoundTrips) {
  const auto& pal = atr_palette();
  std::set<std::array<std::uint8_t, 3>> unique(pal.begin(), pal.end());
  EXPECT_EQ(unique.size(), 12u);
  EXPECT_EQ(pal[0], (std::array<std::uint8_t, 3>{0, 0, 0}));
  EXPECT_EQ(pal[11], (std::array<std::uint8_t, 3>{255, 255, 255}));

  LabelImage l(3, 4);
  for (std::size_t i = 0; i < 12; ++i) l[i] = static_cast<std::uint8_t>(i + 1);
  const RgbImage rgb = render_atr(l);
  ASSERT_EQ(rgb.rgb.size(), 36u);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(rgb.rgb[3 * i + k], pal[i][k]);
  }
  TempDir dir("ppm");
  save_ppm(rgb, (dir / "a.ppm").string());
  EXPECT_EQ(load_ppm((dir / "a.ppm").string()), rgb);
}
