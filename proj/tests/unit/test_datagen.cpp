#include "ordcore/datagen.hpp"
#include "ordcore/error.hpp"
#include "ordcore/otd.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace ordcore;
using namespace ordcore::datagen;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "ordcore_datagen_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << body;
  return path;
}

ErrorKind load_error(const std::filesystem::path& path, std::string* message = nullptr) {
  try {
    load_csv(path);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "load_csv accepted " << path;
  return ErrorKind::Input;
}

}  // namespace

TEST(Generate, SameSeedSameBytes) {
  SyntheticSpec spec;
  spec.seed = 42;
  const auto a = generate(spec);
  const auto b = generate(spec);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  spec.seed = 43;
  EXPECT_NE(generate(spec).fingerprint(), a.fingerprint());
}

TEST(Generate, ShapesAndVocabulary) {
  SyntheticSpec spec;
  spec.class_count = 2;
  spec.samples_per_class = 5;
  spec.input_dim = 3;
  const auto d = generate(spec);
  EXPECT_EQ(d.size(), 10u);
  EXPECT_EQ(d.features.cols(), 3);
  EXPECT_EQ(d.ranks, (Labels{1.0, 2.0}));
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.ranks[d.classes[i]], d.labels[i]);
  EXPECT_EQ(d.fingerprint().size(), 16u);
}

TEST(Generate, NoiseErodesOrdinalStructure) {
  SyntheticSpec spec;
  spec.class_count = 5;
  spec.samples_per_class = 4;
  spec.input_dim = 3;
  spec.noise = 0.0;
  spec.curve = Curve::Line;
  const auto clean = generate(spec);
  spec.noise = 5.0;
  const auto noisy = generate(spec);
  EXPECT_GT(otd::ordinal_constraint_rate(clean.features, clean.labels),
            otd::ordinal_constraint_rate(noisy.features, noisy.labels));
}

TEST(Generate, CurveIsSmooth) {
  for (auto curve : {Curve::Helix, Curve::Line}) {
    const Vector a = curve_point(curve, 3.0, 8);
    const Vector b = curve_point(curve, 3.0 + 1e-6, 8);
    EXPECT_EQ(a.size(), 8);
    EXPECT_LT((a - b).norm(), 1e-4);
  }
}

TEST(Generate, RejectsSingleClass) {
  SyntheticSpec spec;
  spec.class_count = 1;
  EXPECT_THROW(generate(spec), Error);
  EXPECT_THROW(curve_from_string("spiral"), Error);
}

TEST(Csv, RoundTrip) {
  SyntheticSpec spec;
  spec.class_count = 3;
  spec.samples_per_class = 4;
  spec.input_dim = 2;
  const auto d = generate(spec);
  const auto path = std::filesystem::temp_directory_path() / "ordcore_datagen_roundtrip.csv";
  for (bool header : {false, true}) {
    write_csv(d, path, header);
    const auto back = load_csv(path, header);
    EXPECT_EQ(back.features, d.features);
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.fingerprint(), d.fingerprint());
  }
}

TEST(Csv, SkipsBlankLinesAndHeader) {
  const auto path = temp_file("blank.csv", "x1,x2,y\n\n0.5,1,1\n  \n2,3.25,2\n");
  const auto d = load_csv(path, true);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.features(1, 1), 3.25);
  EXPECT_EQ(d.classes, (std::vector<ClassId>{0, 1}));
}

TEST(Csv, ErrorsNameTheLine) {
  std::string msg;
  EXPECT_EQ(load_error(temp_file("bad.csv", "1,2,1\n1,abc,2\n"), &msg), ErrorKind::Io);
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;

  EXPECT_EQ(load_error(temp_file("ragged.csv", "1,2,1\n1,2,1\n1,2\n"), &msg), ErrorKind::Io);
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;

  EXPECT_EQ(load_error(temp_file("single.csv", "1,1\n2,1\n")), ErrorKind::Io);
  EXPECT_EQ(load_error(temp_file("empty.csv", "\n\n")), ErrorKind::Io);
  EXPECT_EQ(load_error("/nonexistent/ordcore.csv"), ErrorKind::Io);
}

TEST(Dataset, SubsetKeepsVocabulary) {
  SyntheticSpec spec;
  spec.class_count = 3;
  spec.samples_per_class = 2;
  const auto d = generate(spec);
  const std::vector<std::size_t> rows{5, 0};
  const auto s = d.subset(rows);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.labels[0], d.labels[5]);
  EXPECT_EQ(s.features.row(1), d.features.row(0));
}
