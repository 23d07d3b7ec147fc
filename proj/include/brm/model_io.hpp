#pragma once

// Model files: one line of JSON describing the model, a newline, then every
// tensor as little-endian float32 in QNetwork::tensors() order (each tensor
// in Eigen's column-major storage order).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "brm/training.hpp"

namespace brm {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

inline std::string_view space_name(Space s) {
  switch (s) {
    case Space::Word: return "word";
    case Space::Pos: return "pos";
    case Space::Letter: return "letter";
    case Space::Action: return "action";
  }
  return "?";
}

}  // namespace detail

inline nlohmann::json model_header(const Model& model, const nlohmann::json& manifest = nullptr) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : model.layout.slots) slots.push_back({{"space", detail::space_name(s.space)}, {"name", s.name}});
  nlohmann::json letters = nlohmann::json::array();
  for (char32_t cp : model.vocab.letters()) letters.push_back(static_cast<std::uint32_t>(cp));
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : model.net.tensors())
    tensors.push_back({{"name", name}, {"rows", t->rows()}, {"cols", t->cols()}});
  const NetworkDims& d = model.net.dims();
  return {
      {"format", "brm-model"},
      {"version", kModelFormatVersion},
      {"config", to_json(model.config)},
      {"machine",
       {{"task", std::string(to_string(model.machine.task))},
        {"backtracking", model.machine.backtracking},
        {"k", model.machine.k},
        {"tag_count", model.machine.tag_count}}},
      {"vocab", {{"tags", model.vocab.tags.names()}, {"words", model.vocab.words()}, {"letters", letters}}},
      {"layout", {{"slots", slots}, {"back_flag", model.layout.back_flag}}},
      {"dims",
       {{"vocab", d.vocab},
        {"word_dim", d.word_dim},
        {"embed_dim", d.embed_dim},
        {"hidden", d.hidden},
        {"dropout", d.dropout},
        {"heads", d.heads}}},
      {"tensors", tensors},
      {"manifest", manifest},
  };
}

inline void save_model(std::ostream& out, const Model& model, const nlohmann::json& manifest = nullptr) {
  out << model_header(model, manifest).dump() << '\n';
  for (const auto& [name, t] : model.net.tensors()) {
    for (Eigen::Index i = 0; i < t->size(); ++i) {
      std::uint32_t bits;
      const float v = t->data()[i];
      std::memcpy(&bits, &v, sizeof bits);
      bits = detail::to_little(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  if (!out) throw Error("failed to write model");
}

inline std::string model_bytes(const Model& model, const nlohmann::json& manifest = nullptr) {
  std::ostringstream out(std::ios::binary);
  save_model(out, model, manifest);
  return out.str();
}

inline void save_model(const std::string& path, const Model& model, const nlohmann::json& manifest = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file '" + path + "'");
  save_model(out, model, manifest);
}

struct LoadedModel {
  Model model;
  nlohmann::json manifest;
};

inline LoadedModel load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("model file is empty");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model header is not JSON: ") + e.what());
  }
  if (h.value("format", "") != "brm-model") throw ValidationError("not a model file");
  if (h.value("version", 0) != kModelFormatVersion)
    throw ValidationError("unsupported model format version " + h["version"].dump());

  try {
    Vocabulary vocab;
    vocab.tags = TagSet::from_names(h["vocab"]["tags"].get<std::vector<std::string>>());
    for (const auto& w : h["vocab"]["words"]) vocab.add_word(w.get<std::string>());
    for (const auto& cp : h["vocab"]["letters"]) vocab.add_letter(static_cast<char32_t>(cp.get<std::uint32_t>()));
    LoadedModel loaded;
    Model& model = loaded.model;
    model = Model::create(train_config_from_json(h["config"]), std::move(vocab));
    loaded.manifest = h["manifest"];

    // The header's machine and layout must be what the config rebuilds.
    const auto& hm = h["machine"];
    if (hm["task"].get<std::string>() != to_string(model.machine.task) ||
        hm["backtracking"].get<bool>() != model.machine.backtracking || hm["k"].get<int>() != model.machine.k ||
        hm["tag_count"].get<int>() != model.machine.tag_count)
      throw ValidationError("model header: machine does not match its configuration");
    const auto& slots = h["layout"]["slots"];
    if (slots.size() != model.layout.slots.size())
      throw ValidationError("model header: feature layout does not match the machine");
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i]["name"].get<std::string>() != model.layout.slots[i].name)
        throw ValidationError("model header: unexpected slot '" + slots[i]["name"].get<std::string>() + "'");

    auto tensors = model.net.tensors();
    const auto& ht = h["tensors"];
    if (ht.size() != tensors.size()) throw ValidationError("model header: wrong tensor count");
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      auto& mat = *tensors[t].second;
      if (ht[t]["name"].get<std::string>() != tensors[t].first || ht[t]["rows"].get<long>() != mat.rows() ||
          ht[t]["cols"].get<long>() != mat.cols())
        throw ValidationError("model header: tensor " + tensors[t].first + " has the wrong shape");
      for (Eigen::Index i = 0; i < mat.size(); ++i) {
        std::uint32_t bits;
        if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits))
          throw ValidationError("model file truncated in tensor " + tensors[t].first);
        bits = detail::to_little(bits);
        float v;
        std::memcpy(&v, &bits, sizeof v);
        mat.data()[i] = v;
      }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes after the last tensor");
    return loaded;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model header: ") + e.what());
  }
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path + "'");
  return load_model(in);
}

}  // namespace brm
