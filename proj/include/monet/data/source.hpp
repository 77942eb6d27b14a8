#pragma once

#include <filesystem>
#include <vector>

#include "monet/data/dataset_io.hpp"

namespace monet::data {

// Random-access scene provider for training and evaluation.
class SceneSource {
 public:
  virtual ~SceneSource() = default;
  virtual std::uint64_t size() const = 0;
  virtual Index mask_slots() const = 0;
  virtual Index height() const = 0;
  virtual Index width() const = 0;
  virtual LabeledScene get(std::uint64_t index) = 0;
};

class InMemoryScenes : public SceneSource {
 public:
  explicit InMemoryScenes(std::vector<LabeledScene> scenes) : scenes_(std::move(scenes)) {
    if (scenes_.empty()) throw ArgumentError("scene source is empty");
  }
  std::uint64_t size() const override { return scenes_.size(); }
  Index mask_slots() const override { return scenes_.front().mask_slots; }
  Index height() const override { return scenes_.front().height; }
  Index width() const override { return scenes_.front().width; }
  LabeledScene get(std::uint64_t index) override { return scenes_.at(index); }

 private:
  std::vector<LabeledScene> scenes_;
};

class FileScenes : public SceneSource {
 public:
  explicit FileScenes(const std::filesystem::path& path) : reader_(path) {
    if (reader_.size() == 0) throw ArgumentError(path.string() + " contains no scenes");
  }
  std::uint64_t size() const override { return reader_.size(); }
  Index mask_slots() const override { return reader_.header().mask_slots; }
  Index height() const override { return reader_.header().height; }
  Index width() const override { return reader_.header().width; }
  LabeledScene get(std::uint64_t index) override { return reader_.read(index); }

 private:
  DatasetReader reader_;
};

}  // namespace monet::data
