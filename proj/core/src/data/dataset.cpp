#include "attukan/data/dataset.hpp"

#include <map>

#include "attukan/data/image_io.hpp"
#include "attukan/data/preprocess.hpp"

namespace attukan::data {

namespace fs = std::filesystem;

namespace {

std::map<std::string, fs::path> by_stem(const fs::path& dir, bool required) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) {
    if (required) throw IoError("missing directory " + dir.string());
    return out;
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) out[e.path().stem().string()] = e.path();
  }
  return out;
}

Tensor binary_plane(const fs::path& p) {
  Tensor t = read_image(p);
  if (t.rank() != 2) throw IoError(p.string() + ": labels and masks must be grayscale (P5)");
  for (auto& v : t.data()) v = v >= 0.5 ? 1.0 : 0.0;
  return t;
}

}  // namespace

std::vector<SegmentationSample> load_dataset_dir(const fs::path& dir) {
  const auto images = by_stem(dir / "images", true);
  const auto labels = by_stem(dir / "labels", true);
  const auto masks = by_stem(dir / "masks", false);
  if (images.empty()) throw IoError("no images found in " + (dir / "images").string());

  std::vector<SegmentationSample> out;
  for (const auto& [stem, path] : images) {
    const auto lab = labels.find(stem);
    if (lab == labels.end()) throw IoError("no label for image " + path.string());
    SegmentationSample s;
    s.id = stem;
    Tensor img = read_image(path);
    if (img.rank() == 2) img = img.reshaped({1, img.dim(0), img.dim(1)});
    if (img.dim(0) == 3) {
      Tensor g = luminance(img);
      img = g.reshaped({1, g.dim(0), g.dim(1)});
    }
    s.image = std::move(img);
    s.label = binary_plane(lab->second);
    if (const auto m = masks.find(stem); m != masks.end()) s.mask = binary_plane(m->second);
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset_dir(const fs::path& dir, const std::vector<SegmentationSample>& samples) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  for (const auto& s : samples) {
    write_image(dir / "images" / (s.id + ".pgm"), s.image);
    write_image(dir / "labels" / (s.id + ".pgm"), s.label);
    if (s.mask) {
      fs::create_directories(dir / "masks");
      write_image(dir / "masks" / (s.id + ".pgm"), *s.mask);
    }
  }
}

}  // namespace attukan::data
