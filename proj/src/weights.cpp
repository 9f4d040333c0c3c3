#include "pifnet/weights.hpp"

#include <fstream>
#include <map>

#include "pifnet/errors.hpp"
#include "pifnet/tensor_io.hpp"

namespace pifnet {

namespace {

struct Entry {
  std::string name;
  Tensor* value;
};

std::vector<Entry> entries_of(Model& model) {
  std::vector<Entry> out;
  for (const auto& p : model.parameters()) out.push_back({p.name, p.value});
  for (const auto& b : model.buffers()) out.push_back({b.name, b.value});
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void save_weights(Model& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
  manifest << "# model = " << to_string(model.kind()) << "\n";
  for (const auto& e : entries_of(model)) {
    const std::string file = e.name + ".pift";
    write_pift(dir / file, *e.value);
    manifest << e.name << " = " << file << "\n";
  }
}

void load_weights(Model& model, const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  std::map<std::string, std::string> files;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError("manifest line without '='", line_start);
    files[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  for (const auto& e : entries_of(model)) {
    const auto it = files.find(e.name);
    if (it == files.end()) throw FormatError("manifest is missing tensor " + e.name, offset);
    Tensor t = read_pift(dir / it->second);
    if (t.shape() != e.value->shape()) {
      throw ShapeError("weight " + e.name + " has shape " + shape_to_string(t.shape()) + ", model expects " +
                       shape_to_string(e.value->shape()));
    }
    *e.value = std::move(t);
  }
}

}  // namespace pifnet
