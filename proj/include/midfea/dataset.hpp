#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace midfea {

enum class Split { Train, Test };

struct DatasetEntry {
  std::filesystem::path path;  // absolute or relative to the working directory
  std::string label;
  Split split = Split::Train;
};

/// Labelled image list. Classes are indexed by sorted label order.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;
  std::vector<std::string> classes;

  std::size_t class_index(const std::string& label) const;
  std::vector<const DatasetEntry*> split(Split s) const;
  /// Every label parses as an integer (age estimation style data).
  bool numeric_labels() const;
};

/// Data problems: unreadable files, malformed manifests, empty classes.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads either a manifest file ("path<TAB>label<TAB>split" per line, paths
/// relative to the manifest's directory) or a directory. A directory with a
/// manifest.tsv is read through it; otherwise root/<label>/<image>.{pgm,ppm}
/// is scanned and, within each class in sorted order, even positions go to
/// the training split and odd ones to the test split.
/// Entries come back sorted by (label, path).
DatasetManifest ingest(const std::filesystem::path& source);

void write_manifest(const std::filesystem::path& file, const DatasetManifest& manifest);

std::string to_string(Split s);
Split parse_split(const std::string& text);

}  // namespace midfea
