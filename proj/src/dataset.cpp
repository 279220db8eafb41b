#include "entpick/dataset.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace entpick {

using nlohmann::json;

std::vector<Sample> Dataset::split(Split which) const {
    std::vector<Sample> out;
    for (const auto& r : rows)
        if (r.split == which) out.push_back(r);
    return out;
}

std::vector<double> Dataset::masses(Split which) const {
    std::vector<double> out;
    for (const auto& r : rows)
        if (r.split == which) out.push_back(r.mass_g);
    return out;
}

std::size_t Dataset::count(Split which) const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.split == which ? 1 : 0;
    return n;
}

void write_dataset_jsonl(const Dataset& ds, std::ostream& out) {
    for (const auto& r : ds.rows) {
        const int s = r.obs.side;
        json patch = json::array();
        for (int y = 0; y < s; ++y) {
            json row = json::array();
            for (int x = 0; x < s; ++x) row.push_back(r.obs.at(x, y));
            patch.push_back(std::move(row));
        }
        json line{{"patch", std::move(patch)},
                  {"z_cm", r.obs.insertion_depth_cm},
                  {"mass_g", r.mass_g},
                  {"split", r.split == Split::train ? "train" : "eval"}};
        out << line.dump() << '\n';
    }
}

Dataset read_dataset_jsonl(std::istream& in) {
    Dataset ds;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw DatasetError(line, std::string("malformed JSON (") + e.what() + ")");
        }
        try {
            Sample s;
            const auto& patch = j.at("patch");
            if (!patch.is_array() || patch.empty()) throw DatasetError(line, "patch must be a non-empty 2D array");
            const int side = static_cast<int>(patch.size());
            s.obs.side = side;
            s.obs.heights.reserve(static_cast<std::size_t>(side) * side);
            for (const auto& row : patch) {
                if (!row.is_array() || static_cast<int>(row.size()) != side)
                    throw DatasetError(line, "patch must be square");
                for (const auto& v : row) s.obs.heights.push_back(v.get<double>());
            }
            s.obs.insertion_depth_cm = j.at("z_cm").get<double>();
            if (!(s.obs.insertion_depth_cm > 0.0)) throw DatasetError(line, "z_cm must be positive");
            s.mass_g = j.at("mass_g").get<double>();
            if (!(s.mass_g >= 0.0) || !std::isfinite(s.mass_g)) throw DatasetError(line, "mass_g must be >= 0");
            const auto split = j.at("split").get<std::string>();
            if (split == "train")
                s.split = Split::train;
            else if (split == "eval")
                s.split = Split::eval;
            else
                throw DatasetError(line, "split must be 'train' or 'eval'");
            ds.rows.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw DatasetError(line, e.what());
        }
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset '" + path + "'");
    write_dataset_jsonl(ds, out);
    if (!out) throw std::runtime_error("failed writing dataset '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
    return read_dataset_jsonl(in);
}

}  // namespace entpick
