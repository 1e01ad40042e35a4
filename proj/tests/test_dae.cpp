// tests/test_dae.cpp

// Copyright 2026 The xmodal Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "xmodal/dae.hpp"
#include "xmodal/error.hpp"

using namespace xmodal;

namespace {

Tensor random(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng, 0.0, scale);
  return t;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("xmodal_test_" + name);
}

}  // namespace

TEST_CASE("full-size configuration produces the architecture shapes") {
  const DAEConfig cfg = DAEConfig::full();
  Rng rng = make_rng(1, "full");
  ParameterSet ps;
  AcousticDAE a(cfg.acoustic, cfg.latent_dim, ps, rng);
  SequenceDAE v(Modality::kVisual, cfg.visual, cfg.latent_dim, ps, rng);
  SequenceDAE l(Modality::kLexical, cfg.lexical, cfg.latent_dim, ps, rng);

  CHECK(v.bottleneck() == Shape{32, 2, 29});
  CHECK(v.flat_size() == 1856);
  CHECK(l.bottleneck() == Shape{4, 4, 171});
  CHECK(l.flat_size() == 2736);

  Graph g;
  Var za = a.encode(g, g.constant(random(rng, {1, 1582})));
  CHECK(za.shape() == Shape{1, 128});
  CHECK(a.decode(g, za).shape() == Shape{1, 1582});

  std::vector<Shape> enc, dec;
  Var zv = v.encode(g, g.constant(random(rng, {1, 18, 342})), {}, &enc);
  CHECK(zv.shape() == Shape{1, 128});
  CHECK(enc == std::vector<Shape>{{16, 9, 171}, {64, 4, 85}, {32, 2, 29}});
  CHECK(v.decode(g, zv, &dec).shape() == Shape{1, 18, 342});
  CHECK(dec == std::vector<Shape>{{32, 2, 29}, {64, 4, 85}, {16, 9, 171}, {1, 18, 342}});

  enc.clear();
  dec.clear();
  Var zl = l.encode(g, g.constant(random(rng, {1, 22, 1024})), {}, &enc);
  CHECK(zl.shape() == Shape{1, 128});
  CHECK(enc == std::vector<Shape>{{64, 11, 512}, {4, 4, 171}});
  CHECK(l.decode(g, zl, &dec).shape() == Shape{1, 22, 1024});
  CHECK(dec == std::vector<Shape>{{4, 4, 171}, {64, 11, 512}, {1, 22, 1024}});
}

TEST_CASE("toy configuration round-trips shapes and is deterministic") {
  const DAEConfig cfg = DAEConfig::toy();
  Rng rng = make_rng(2, "toy");
  ParameterSet ps;
  AcousticDAE a(cfg.acoustic, cfg.latent_dim, ps, rng);
  SequenceDAE v(Modality::kVisual, cfg.visual, cfg.latent_dim, ps, rng);
  SequenceDAE l(Modality::kLexical, cfg.lexical, cfg.latent_dim, ps, rng);
  const Tensor xa = random(rng, {5, 64}), xv = random(rng, {5, 6, 16}), xl = random(rng, {5, 8, 32});
  std::vector<std::uint8_t> mask(5 * 8, 1);
  mask[7] = mask[6] = 0;

  Graph g1, g2;
  CHECK(a.decode(g1, a.encode(g1, g1.constant(xa))).shape() == xa.shape());
  CHECK(v.decode(g1, v.encode(g1, g1.constant(xv))).shape() == xv.shape());
  CHECK(l.decode(g1, l.encode(g1, g1.constant(xl), mask)).shape() == xl.shape());
  CHECK(v.encode(g1, g1.constant(xv)).value() == v.encode(g2, g2.constant(xv)).value());
  CHECK(l.encode(g1, g1.constant(xl), mask).value() == l.encode(g2, g2.constant(xl), mask).value());
  CHECK(a.encode(g1, g1.constant(xa)).value() == a.encode(g2, g2.constant(xa)).value());
}

TEST_CASE("the padding mask changes the encoding only when enabled") {
  DAEConfig cfg = DAEConfig::toy();
  Rng rng = make_rng(3, "mask");
  const Tensor x = random(rng, {2, 8, 32});
  std::vector<std::uint8_t> mask(16, 1);
  mask[5] = mask[6] = mask[7] = 0;
  for (bool enabled : {true, false}) {
    cfg.lexical.padding_mask = enabled;
    Rng init = make_rng(3, "init");
    ParameterSet ps;
    SequenceDAE l(Modality::kLexical, cfg.lexical, cfg.latent_dim, ps, init);
    Graph g;
    const bool differs = l.encode(g, g.constant(x), mask).value() != l.encode(g, g.constant(x)).value();
    CHECK(differs == enabled);
  }
}

TEST_CASE("every parameter gets a gradient from reconstruction alone") {
  const DAEConfig cfg = DAEConfig::toy();
  Rng rng = make_rng(4, "grads");
  ParameterSet ps;
  AcousticDAE a(cfg.acoustic, cfg.latent_dim, ps, rng);
  SequenceDAE v(Modality::kVisual, cfg.visual, cfg.latent_dim, ps, rng);
  SequenceDAE l(Modality::kLexical, cfg.lexical, cfg.latent_dim, ps, rng);
  Graph g;
  Var xa = g.constant(random(rng, {8, 64}));
  Var xv = g.constant(random(rng, {8, 6, 16}));
  Var xl = g.constant(random(rng, {8, 8, 32}));
  Var loss = ops::add(
      reconstruction_loss(a.decode(g, a.encode(g, xa)), reconstruction_target(Modality::kAcoustic, xa)),
      ops::add(reconstruction_loss(v.decode(g, v.encode(g, xv)),
                                   reconstruction_target(Modality::kVisual, xv)),
               reconstruction_loss(l.decode(g, l.encode(g, xl)),
                                   reconstruction_target(Modality::kLexical, xl))));
  g.backward(loss);
  for (const Parameter* p : ps.all()) {
    double norm = 0;
    for (double x : p->grad.data()) norm += x * x;
    INFO(p->name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("reconstruction targets and losses") {
  Graph g;
  Var x = g.constant(Tensor::from({1, 3, 2}, {1, 2, 3, 4, 5, 6}));
  CHECK(reconstruction_target(Modality::kAcoustic, x).value() == x.value());
  Var r = reconstruction_target(Modality::kLexical, x);
  CHECK(r.value() == Tensor::from({1, 3, 2}, {5, 6, 3, 4, 1, 2}));
  CHECK(reconstruction_target(Modality::kLexical, r).value() == x.value());

  CHECK(reconstruction_loss(x, x).item() == 0.0);
  CHECK(reconstruction_loss(g.constant(Tensor::scalar(0)), g.constant(Tensor::scalar(1))).item() == 1.0);
  CHECK(reconstruction_loss(g.constant(Tensor::from({2}, {0, 1})),
                            g.constant(Tensor::from({2}, {1, 3})))
            .item() == 2.5);
  CHECK_THROWS_AS(reconstruction_loss(x, g.constant(Tensor({3, 2}))), ShapeError);
}

TEST_CASE("encode rejects a wrongly shaped input naming the modality") {
  const DAEConfig cfg = DAEConfig::toy();
  Rng rng = make_rng(5, "err");
  ParameterSet ps;
  SequenceDAE v(Modality::kVisual, cfg.visual, cfg.latent_dim, ps, rng);
  Graph g;
  try {
    v.encode(g, g.constant(Tensor({2, 7, 16})));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("visual") != std::string::npos);
    CHECK(std::string(e.what()).find("6x16") != std::string::npos);
  }
  CHECK_THROWS_AS(v.decode(g, g.constant(Tensor({2, 5}))), ShapeError);
}

TEST_CASE("checkpoint round trip and corruption") {
  const DAEConfig cfg = DAEConfig::toy();
  Rng rng = make_rng(6, "ck");
  ParameterSet ps;
  AcousticDAE a(cfg.acoustic, cfg.latent_dim, ps, rng);
  const auto path = temp_path("ck.bin");
  save_checkpoint(path, "{\"k\": 1}", ps);
  const Checkpoint ck = read_checkpoint(path);
  CHECK(ck.config_text == "{\"k\": 1}");
  REQUIRE(ck.params.size() == ps.size());

  Rng other = make_rng(7, "ck");
  ParameterSet fresh;
  AcousticDAE b(cfg.acoustic, cfg.latent_dim, fresh, other);
  load_parameters(ck, fresh);
  for (const Parameter* p : ps.all()) CHECK(fresh.find(p->name)->value == p->value);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  CHECK_THROWS_AS(read_checkpoint(path), IoError);
  {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "NOTACKPT";
  }
  CHECK_THROWS_AS(read_checkpoint(path), IoError);
  std::filesystem::remove(path);

  ParameterSet mismatched;
  Rng r3 = make_rng(8, "ck");
  AcousticConfig wider = cfg.acoustic;
  wider.hidden = {40};
  AcousticDAE c(wider, cfg.latent_dim, mismatched, r3);
  CHECK_THROWS_AS(load_parameters(ck, mismatched), IoError);
}
