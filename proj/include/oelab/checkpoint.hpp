// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "oelab/error.hpp"
#include "oelab/io.hpp"
#include "oelab/trainer.hpp"

namespace oelab {

/// Plain-text checkpoint: one `name=v0,v1,...` line per tensor, row-major,
/// preceded by `name.shape=rows,cols` for matrices. Lines starting with '#'
/// are comments.
inline std::string checkpoint_text(const Model& model) {
  std::string s = "# oelab checkpoint\n";
  auto shape = [&](const std::string& name, const Matrix& m) {
    s += name + ".shape=" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "\n";
  };
  Model copy = model;
  for (std::size_t l = 0; l < copy.backbone.layers.size(); ++l)
    shape("backbone.layer" + std::to_string(l) + ".weight", copy.backbone.layers[l].weights);
  if (const auto* lin = std::get_if<LinearHeadParams>(&copy.head)) shape("head.weight", lin->weights);
  copy.for_each_tensor([&](const std::string& name, std::span<double> t) {
    s += name + "=" + io::join_doubles(t) + "\n";
  });
  return s;
}

inline Model model_from_checkpoint(std::string_view text) {
  std::map<std::string, std::vector<double>> entries;
  for (const auto& line : io::lines(text)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("checkpoint: malformed line '" + line + "'");
    entries[line.substr(0, eq)] = io::parse_doubles(std::string_view(line).substr(eq + 1));
  }
  auto take = [&](const std::string& name) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw Error("checkpoint: missing tensor " + name);
    auto v = std::move(it->second);
    entries.erase(it);
    return v;
  };
  auto matrix = [&](const std::string& name) {
    const auto shape = take(name + ".shape");
    if (shape.size() != 2) throw Error("checkpoint: bad shape for " + name);
    return Matrix(static_cast<std::size_t>(shape[0]), static_cast<std::size_t>(shape[1]), take(name));
  };

  Model m;
  for (std::size_t l = 0; entries.count("backbone.layer" + std::to_string(l) + ".weight"); ++l) {
    const std::string prefix = "backbone.layer" + std::to_string(l);
    DenseLayer layer{matrix(prefix + ".weight"), take(prefix + ".bias"), Activation::relu};
    m.backbone.layers.push_back(std::move(layer));
  }
  if (m.backbone.layers.empty()) throw Error("checkpoint: no backbone layers");
  m.backbone.layers.back().activation = Activation::none;
  m.backbone.validate();

  if (entries.count("head.weight")) {
    LinearHeadParams h{matrix("head.weight"), take("head.bias")};
    detail::require_dims(h.bias.size(), h.weights.rows(), "checkpoint head.bias");
    m.head = std::move(h);
  } else {
    GaussianHeadParams h;
    for (std::size_t i = 0; entries.count("head.mean" + std::to_string(i)); ++i)
      h.means.push_back(take("head.mean" + std::to_string(i)));
    if (h.means.empty()) throw Error("checkpoint: no head tensors");
    const std::size_t d = h.means[0].size();
    h.tri_raw = LowerTriangular(d);
    auto raw = take("head.tri_raw");
    detail::require_dims(raw.size(), d * (d + 1) / 2, "checkpoint head.tri_raw");
    h.tri_raw.packed() = std::move(raw);
    for (const auto& mu : h.means) detail::require_dims(mu.size(), d, "checkpoint head.mean");
    m.head = std::move(h);
  }
  detail::require_dims(std::visit([](const auto& h) { return h.dim(); }, m.head), m.backbone.out_dim(),
                       "checkpoint head input");
  if (!entries.empty()) throw Error("checkpoint: unexpected tensor " + entries.begin()->first);
  return m;
}

}  // namespace oelab
