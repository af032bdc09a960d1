#include "midfea/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace midfea {

namespace fs = std::filesystem;

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw DataError("unknown split '" + text + "' (expected train or test)");
}

std::size_t DatasetManifest::class_index(const std::string& label) const {
  const auto it = std::lower_bound(classes.begin(), classes.end(), label);
  if (it == classes.end() || *it != label) throw DataError("unknown label '" + label + "'");
  return static_cast<std::size_t>(it - classes.begin());
}

std::vector<const DatasetEntry*> DatasetManifest::split(Split s) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

bool DatasetManifest::numeric_labels() const {
  if (classes.empty()) return false;
  for (const auto& c : classes) {
    long long v = 0;
    auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
    if (ec != std::errc() || p != c.data() + c.size()) return false;
  }
  return true;
}

namespace {

bool is_image(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

void finish(DatasetManifest& m) {
  std::sort(m.entries.begin(), m.entries.end(), [](const DatasetEntry& a, const DatasetEntry& b) {
    return a.label != b.label ? a.label < b.label : a.path < b.path;
  });
  std::set<std::string> labels;
  for (const auto& e : m.entries) {
    if (!fs::is_regular_file(e.path)) throw DataError("missing image: " + e.path.string());
    labels.insert(e.label);
  }
  m.classes.assign(labels.begin(), labels.end());
  if (m.entries.empty()) throw DataError("dataset at " + m.root.string() + " has no images");
}

DatasetManifest read_manifest_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open manifest " + file.string());
  DatasetManifest m;
  m.root = file.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError(file.string() + ":" + std::to_string(lineno) +
                      ": expected path<TAB>label<TAB>split");
    }
    DatasetEntry e;
    e.path = fs::path(fields[0]).is_absolute() ? fs::path(fields[0]) : m.root / fields[0];
    e.label = fields[1];
    try {
      e.split = parse_split(fields[2]);
    } catch (const DataError& err) {
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": " + err.what());
    }
    m.entries.push_back(std::move(e));
  }
  finish(m);
  return m;
}

DatasetManifest scan_directory(const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  std::vector<fs::path> class_dirs;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory()) class_dirs.push_back(d.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> images;
    for (const auto& f : fs::directory_iterator(dir))
      if (f.is_regular_file() && is_image(f.path())) images.push_back(f.path());
    std::sort(images.begin(), images.end());
    if (images.empty()) throw DataError("class directory " + dir.string() + " holds no images");
    for (std::size_t i = 0; i < images.size(); ++i) {
      m.entries.push_back({images[i], dir.filename().string(), i % 2 == 0 ? Split::Train : Split::Test});
    }
  }
  finish(m);
  return m;
}

}  // namespace

DatasetManifest ingest(const fs::path& source) {
  if (fs::is_directory(source)) {
    if (fs::is_regular_file(source / "manifest.tsv")) return read_manifest_file(source / "manifest.tsv");
    return scan_directory(source);
  }
  if (fs::is_regular_file(source)) return read_manifest_file(source);
  throw DataError("dataset source not found: " + source.string());
}

void write_manifest(const fs::path& file, const DatasetManifest& manifest) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write manifest " + file.string());
  const fs::path base = file.parent_path();
  for (const auto& e : manifest.entries) {
    const fs::path rel = e.path.lexically_relative(base);
    out << (rel.empty() ? e.path : rel).generic_string() << '\t' << e.label << '\t' << to_string(e.split) << '\n';
  }
}

}  // namespace midfea
