// Copyright 2026 The KGS-GCN Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include "kgs/errors.hpp"
#include "kgs/io.hpp"
#include "support.hpp"

using namespace kgs;

TEST_CASE("matrix CSV round-trips bit-exactly") {
  const auto dir = test::scratch_dir("io_csv");
  Rng rng(3);
  std::vector<double> values(12);
  for (double& v : values) v = rng.uniform(-1.0, 1.0) * std::exp(rng.uniform(-30.0, 30.0));
  write_matrix_csv(dir / "m.csv", values, 3, 4);
  std::size_t rows = 0, cols = 0;
  const auto back = read_matrix_csv(dir / "m.csv", &rows, &cols);
  CHECK(rows == 3);
  CHECK(cols == 4);
  CHECK(back == values);
  CHECK_THROWS_AS(write_matrix_csv(dir / "bad.csv", values, 5, 5), DimensionError);
}

TEST_CASE("ragged or non-numeric CSV is rejected") {
  const auto dir = test::scratch_dir("io_bad_csv");
  test::write_file(dir / "ragged.csv", "1,2\n3\n");
  test::write_file(dir / "text.csv", "1,abc\n");
  CHECK_THROWS_AS(read_matrix_csv(dir / "ragged.csv"), ParseError);
  CHECK_THROWS_AS(read_matrix_csv(dir / "text.csv"), ParseError);
}

TEST_CASE("graymaps are binary with clamped 8-bit levels") {
  const auto dir = test::scratch_dir("io_pgm");
  write_pgm(dir / "g.pgm", std::vector<double>{0.0, 0.5, 1.0, 2.0, -1.0, 1.0 / 255.0}, 2, 3);
  const std::string bytes = test::read_file(dir / "g.pgm");
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(bytes.substr(0, header.size()) == header);
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
  CHECK(px[0] == 0);
  CHECK(px[1] == 128);
  CHECK(px[2] == 255);
  CHECK(px[3] == 255);
  CHECK(px[4] == 0);
  CHECK(px[5] == 1);
}

TEST_CASE("run manifest records the invocation") {
  const auto dir = test::scratch_dir("io_manifest");
  write_run_manifest({"render", "cfg.json", {"a.json"}, dir.string(), 9, "2026-01-01T00:00:00Z"}, dir);
  const std::string text = test::read_file(dir / "run_manifest.json");
  CHECK(text.find("\"command\": \"render\"") != std::string::npos);
  CHECK(text.find("\"seed\": 9") != std::string::npos);
  CHECK(text.find("2026-01-01T00:00:00Z") != std::string::npos);
  CHECK(utc_timestamp().size() == 20);
}
