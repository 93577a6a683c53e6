#include "mailintent/dataset_io.hpp"

#include <fstream>
#include <string>

#include "mailintent/error.hpp"

namespace mailintent {

namespace {

constexpr const char* kSplits[] = {"clean", "weak", "dev", "test"};

template <typename D>
auto& split(D& d, std::string_view name) {
  if (name == "clean") return d.clean;
  if (name == "weak") return d.weak;
  if (name == "dev") return d.dev;
  return d.test;
}

Source split_source(std::string_view name) { return name == "weak" ? Source::Weak : Source::Clean; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir, const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  for (const char* name : kSplits) {
    auto out = open_out(dir / (std::string(name) + ".jsonl"));
    const auto& examples = split(dataset, name);
    const bool weak = std::string_view(name) == "weak";
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      nlohmann::json rec{{"id", ex.id}, {"text", ex.text}, {"target", ex.target}};
      if (weak && i < dataset.weak_truth.size() && dataset.weak_truth[i] >= 0) rec["truth"] = dataset.weak_truth[i];
      out << rec.dump() << '\n';
    }
  }
  nlohmann::json m = meta;
  m["num_classes"] = dataset.num_classes;
  auto out = open_out(dir / "meta.json");
  out << m.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir, nlohmann::json* meta) {
  Dataset d;
  {
    std::ifstream in(dir / "meta.json");
    if (!in) throw InputError("missing " + (dir / "meta.json").string());
    nlohmann::json m;
    try {
      in >> m;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("meta.json: ") + e.what(), 1);
    }
    d.num_classes = m.value("num_classes", std::size_t{2});
    if (meta) *meta = std::move(m);
  }
  for (const char* name : kSplits) {
    const auto path = dir / (std::string(name) + ".jsonl");
    std::ifstream in(path);
    if (!in) throw InputError("missing " + path.string());
    auto& examples = split(d, name);
    const bool weak = std::string_view(name) == "weak";
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto rec = nlohmann::json::parse(line);
        Example ex;
        ex.id = rec.at("id").get<std::string>();
        ex.text = rec.at("text").get<std::string>();
        ex.target = rec.at("target").get<std::vector<double>>();
        ex.source = split_source(name);
        if (ex.target.size() != d.num_classes) throw ParseError("target width differs from num_classes", lineno);
        examples.push_back(std::move(ex));
        if (weak) d.weak_truth.push_back(rec.value("truth", -1));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.filename().string() + ": " + e.what(), lineno);
      }
    }
  }
  return d;
}

}  // namespace mailintent
