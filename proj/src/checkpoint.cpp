#include "addnet/checkpoint.hpp"

#include <fstream>

#include "addnet/errors.hpp"
#include "addnet/hash.hpp"

namespace addnet {

namespace {

constexpr const char* kFormat = "addnet-checkpoint";
constexpr int kVersion = 1;

}  // namespace

std::string checkpoint_id(const model::Detector<float>& detector, long step) {
  Fnv1a h;
  const auto& p = detector.parameters();
  h.update(p.data(), std::size_t(p.size()) * sizeof(float));
  return "step-" + std::to_string(step) + "-" + h.hex();
}

void save_checkpoint(const std::filesystem::path& path, const model::Detector<float>& detector,
                     long step, const nlohmann::json& extra) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& e : detector.plan().entries) {
    const float* begin = detector.parameters().data() + e.offset;
    params[e.name] = {{"shape", e.shape}, {"data", std::vector<float>(begin, begin + e.size)}};
  }
  const nlohmann::json j{{"format", kFormat},
                         {"version", kVersion},
                         {"id", checkpoint_id(detector, step)},
                         {"step", step},
                         {"spec", model::to_json(detector.spec())},
                         {"extra", extra},
                         {"params", std::move(params)}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile({path.string()});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat) throw SchemaError(path.string() + ": not a checkpoint");
  if (j.value("version", 0) != kVersion)
    throw SchemaError(path.string() + ": unsupported checkpoint version");

  try {
    model::ModelSpec spec = model::spec_from_json(j.at("spec"));
    const auto plan = model::plan_network(spec);
    model::Vector<float> params(plan.parameter_count());
    const auto& stored = j.at("params");
    for (const auto& e : plan.entries) {
      if (!stored.contains(e.name)) throw SchemaError(path.string() + ": missing array " + e.name);
      const auto& a = stored.at(e.name);
      if (a.at("shape").get<std::vector<int>>() != e.shape)
        throw ShapeMismatch(path.string() + ": array " + e.name + " has the wrong shape");
      const auto data = a.at("data").get<std::vector<float>>();
      if (std::int64_t(data.size()) != e.size)
        throw ShapeMismatch(path.string() + ": array " + e.name + " has the wrong size");
      std::copy(data.begin(), data.end(), params.data() + e.offset);
    }
    Checkpoint c{model::Detector<float>(std::move(spec), std::move(params)),
                 j.at("step").get<long>(), j.at("id").get<std::string>(),
                 j.value("extra", nlohmann::json::object())};
    if (checkpoint_id(c.detector, c.step) != c.id)
      throw SchemaError(path.string() + ": parameter hash does not match id " + c.id);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace addnet
