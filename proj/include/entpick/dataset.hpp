#pragma once

// Grasp datasets as JSON lines, one row per grasp:
//   {"patch": [[mm, ...], ...], "z_cm": 2.0, "mass_g": 17.3, "split": "train"}

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "entpick/mdn.hpp"

namespace entpick {

struct Dataset {
    std::vector<Sample> rows;

    std::vector<Sample> split(Split which) const;
    std::vector<double> masses(Split which) const;
    std::size_t count(Split which) const;
};

/// Parse failure with the 1-based line number of the offending row.
class DatasetError : public std::runtime_error {
public:
    DatasetError(std::size_t line, const std::string& what)
        : std::runtime_error("dataset line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

void write_dataset_jsonl(const Dataset& ds, std::ostream& out);
Dataset read_dataset_jsonl(std::istream& in);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace entpick
