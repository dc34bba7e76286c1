#include "mmeval/report_io.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "mmeval/errors.hpp"
#include "mmeval/util.hpp"

namespace mmeval {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
}

ordered_json num_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

ordered_json estimate_json(const AmceEstimate& e) {
    ordered_json j;
    j["dimension"] = std::string(dimension_name(e.dimension));
    j["n_valid"] = e.n_valid;
    j["p_spare"] = num_or_null(e.p_spare);
    j["amce"] = num_or_null(e.amce);
    j["se"] = num_or_null(e.se);
    j["ci_low"] = num_or_null(e.ci_low);
    j["ci_high"] = num_or_null(e.ci_high);
    return j;
}

ordered_json flip_records_json(const std::vector<FlipRecord>& records) {
    ordered_json arr = ordered_json::array();
    for (const FlipRecord& f : records) {
        ordered_json j;
        j["persona"] = f.persona_id;
        j["dimension"] = std::string(dimension_name(f.dimension));
        j["from_amce"] = f.from_amce;
        j["to_amce"] = f.to_amce;
        arr.push_back(std::move(j));
    }
    return arr;
}

}  // namespace

std::optional<ReportFormat> report_format_from_name(std::string_view name) {
    const std::string n = lower_copy(name);
    if (n == "all") return ReportFormat::All;
    if (n == "json") return ReportFormat::Json;
    if (n == "csv") return ReportFormat::Csv;
    if (n == "md" || n == "markdown") return ReportFormat::Markdown;
    return std::nullopt;
}

std::string report_to_json_text(const AnalysisReport& report) {
    ordered_json j;
    j["schema"] = "report/1";
    j["run_id"] = report.run_id;
    j["params"]["bootstrap_n"] = report.params.bootstrap_n;
    j["params"]["bootstrap_seed"] = report.params.bootstrap_seed;
    j["params"]["flip_epsilon"] = report.params.flip_epsilon;
    j["warnings"] = report.warnings;

    ordered_json personas = ordered_json::array();
    for (const AmceVector& v : report.vectors) {
        ordered_json p;
        p["persona"] = v.persona_id;
        p["n_total"] = v.n_total;
        p["n_valid"] = v.n_valid;
        p["valid_rate"] = num_or_null(v.valid_rate());
        ordered_json amce = ordered_json::array();
        for (Dimension d : kAllDimensions) amce.push_back(estimate_json(v.dim(d)));
        p["amce"] = std::move(amce);
        personas.push_back(std::move(p));
    }
    j["personas"] = std::move(personas);

    ordered_json mdd_arr = ordered_json::array();
    for (const MddRow& r : report.mdd_rows) {
        ordered_json m;
        m["category"] = r.category;
        m["persona_a"] = r.persona_a;
        m["persona_b"] = r.persona_b;
        m["mdd"] = r.value;
        mdd_arr.push_back(std::move(m));
    }
    j["mdd"] = std::move(mdd_arr);

    ordered_json align_arr = ordered_json::array();
    for (const AlignmentRow& r : report.alignment_rows) {
        ordered_json a;
        a["persona"] = r.persona_id;
        a["subgroup"] = r.subgroup;
        a["distance"] = r.distance;
        align_arr.push_back(std::move(a));
    }
    j["alignment"] = std::move(align_arr);

    j["flips"]["epsilon"] = report.flips.epsilon;
    j["flips"]["vs_baseline"]["cells"] = report.flips.cells_vs_baseline;
    j["flips"]["vs_baseline"]["count"] = report.flips.vs_baseline.size();
    j["flips"]["vs_baseline"]["pct"] = report.flips.pct_vs_baseline;
    j["flips"]["vs_baseline"]["records"] = flip_records_json(report.flips.vs_baseline);
    j["flips"]["vs_reference"]["available"] = report.flips.has_reference;
    j["flips"]["vs_reference"]["cells"] = report.flips.cells_vs_reference;
    j["flips"]["vs_reference"]["count"] = report.flips.vs_reference.size();
    j["flips"]["vs_reference"]["pct"] = report.flips.pct_vs_reference;
    j["flips"]["vs_reference"]["records"] = flip_records_json(report.flips.vs_reference);

    ordered_json dev_arr = ordered_json::array();
    for (const DeviationCell& c : report.deviations) {
        ordered_json d;
        d["persona"] = c.persona_id;
        d["dimension"] = std::string(dimension_name(c.dimension));
        d["delta"] = c.delta;
        dev_arr.push_back(std::move(d));
    }
    j["deviation"] = std::move(dev_arr);

    ordered_json var_arr = ordered_json::array();
    for (const CategoryVarianceRow& r : report.category_variance) {
        ordered_json v;
        v["category"] = r.category;
        v["dimension"] = std::string(dimension_name(r.dimension));
        v["variance"] = r.variance;
        var_arr.push_back(std::move(v));
    }
    j["category_variance"] = std::move(var_arr);

    ordered_json culture_arr = ordered_json::array();
    for (const CultureRow& r : report.culture) {
        ordered_json c;
        c["region"] = std::string(region_name(r.region));
        c["total_n"] = r.total_n;
        ordered_json amce;
        for (Dimension d : kAllDimensions)
            amce[std::string(dimension_name(d))] =
                num_or_null(r.amce[static_cast<std::size_t>(d)]);
        c["amce"] = std::move(amce);
        culture_arr.push_back(std::move(c));
    }
    j["culture"] = std::move(culture_arr);

    return j.dump(2) + "\n";
}

std::map<std::string, std::string> report_csv_files(const AnalysisReport& report) {
    std::map<std::string, std::string> files;
    auto add_row = [](std::string& out, const std::vector<std::string>& fields) {
        out += csv_join(fields) + "\n";
    };

    {
        std::string csv;
        add_row(csv, {"persona", "dimension", "n_valid", "p_spare", "amce", "se", "ci_low",
                      "ci_high"});
        for (const AmceVector& v : report.vectors) {
            for (Dimension d : kAllDimensions) {
                const AmceEstimate& e = v.dim(d);
                add_row(csv, {v.persona_id, std::string(dimension_name(d)),
                              std::to_string(e.n_valid), num(e.p_spare), num(e.amce), num(e.se),
                              num(e.ci_low), num(e.ci_high)});
            }
        }
        files["tables/amce.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"persona", "n_total", "n_valid", "valid_rate"});
        for (const AmceVector& v : report.vectors)
            add_row(csv, {v.persona_id, std::to_string(v.n_total), std::to_string(v.n_valid),
                          num(v.valid_rate())});
        files["tables/valid_rates.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"category", "persona_a", "persona_b", "mdd"});
        for (const MddRow& r : report.mdd_rows)
            add_row(csv, {r.category, r.persona_a, r.persona_b, num(r.value)});
        files["tables/mdd.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"persona", "subgroup", "distance"});
        for (const AlignmentRow& r : report.alignment_rows)
            add_row(csv, {r.persona_id, r.subgroup, num(r.distance)});
        files["tables/alignment.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"comparison", "persona", "dimension", "from_amce", "to_amce"});
        for (const FlipRecord& f : report.flips.vs_baseline)
            add_row(csv, {"baseline", f.persona_id, std::string(dimension_name(f.dimension)),
                          num(f.from_amce), num(f.to_amce)});
        for (const FlipRecord& f : report.flips.vs_reference)
            add_row(csv, {"reference", f.persona_id, std::string(dimension_name(f.dimension)),
                          num(f.from_amce), num(f.to_amce)});
        files["tables/flips.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"persona", "dimension", "delta"});
        for (const DeviationCell& c : report.deviations)
            add_row(csv, {c.persona_id, std::string(dimension_name(c.dimension)), num(c.delta)});
        files["tables/deviation.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"category", "dimension", "variance"});
        for (const CategoryVarianceRow& r : report.category_variance)
            add_row(csv, {r.category, std::string(dimension_name(r.dimension)), num(r.variance)});
        files["tables/category_variance.csv"] = std::move(csv);
    }
    if (!report.culture.empty()) {
        std::string csv;
        add_row(csv, {"region", "dimension", "amce", "total_n"});
        for (const CultureRow& r : report.culture)
            for (Dimension d : kAllDimensions)
                add_row(csv, {std::string(region_name(r.region)),
                              std::string(dimension_name(d)),
                              num(r.amce[static_cast<std::size_t>(d)]), num(r.total_n)});
        files["tables/culture_amce.csv"] = std::move(csv);
    }

    // plot data: one file per figure family
    {
        std::string csv;
        add_row(csv, {"persona", "dimension", "amce"});
        for (const AmceVector& v : report.vectors)
            for (Dimension d : kAllDimensions)
                if (v.dim(d).defined())
                    add_row(csv, {v.persona_id, std::string(dimension_name(d)),
                                  num(v.dim(d).amce)});
        files["plotdata/radar.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"category", "mdd"});
        for (const MddRow& r : report.mdd_rows) add_row(csv, {r.category, num(r.value)});
        files["plotdata/mdd_bars.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"dimension", "persona", "amce", "ci_low", "ci_high"});
        for (Dimension d : kAllDimensions)
            for (const AmceVector& v : report.vectors) {
                const AmceEstimate& e = v.dim(d);
                if (e.defined())
                    add_row(csv, {std::string(dimension_name(d)), v.persona_id, num(e.amce),
                                  num(e.ci_low), num(e.ci_high)});
            }
        files["plotdata/preference_bars.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"comparison", "cells", "flips", "pct"});
        add_row(csv, {"baseline", std::to_string(report.flips.cells_vs_baseline),
                      std::to_string(report.flips.vs_baseline.size()),
                      num(report.flips.pct_vs_baseline)});
        if (report.flips.has_reference)
            add_row(csv, {"reference", std::to_string(report.flips.cells_vs_reference),
                          std::to_string(report.flips.vs_reference.size()),
                          num(report.flips.pct_vs_reference)});
        files["plotdata/flip_pct.csv"] = std::move(csv);
    }
    {
        std::string csv;
        add_row(csv, {"persona", "dimension", "delta"});
        for (const DeviationCell& c : report.deviations)
            add_row(csv, {c.persona_id, std::string(dimension_name(c.dimension)), num(c.delta)});
        files["plotdata/deviation_bars.csv"] = std::move(csv);
    }
    return files;
}

namespace {

std::string md_num(double v) {
    if (std::isnan(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
}

}  // namespace

std::string report_to_markdown(const AnalysisReport& report) {
    std::string md;
    md += "# Moral preference report\n\n";
    md += "Run `" + report.run_id + "` — bootstrap n=" +
          std::to_string(report.params.bootstrap_n) +
          ", flip epsilon=" + md_num(report.params.flip_epsilon) + "\n\n";

    md += "## Valid response rates\n\n";
    md += "| persona | total | valid | rate |\n|---|---|---|---|\n";
    for (const AmceVector& v : report.vectors)
        md += "| " + v.persona_id + " | " + std::to_string(v.n_total) + " | " +
              std::to_string(v.n_valid) + " | " + md_num(v.valid_rate()) + " |\n";
    md += "\n";

    md += "## Attribute effects (AMCE)\n\n";
    md += "| persona |";
    for (Dimension d : kAllDimensions) md += " " + std::string(dimension_name(d)) + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < 9; ++i) md += "---|";
    md += "\n";
    for (const AmceVector& v : report.vectors) {
        md += "| " + v.persona_id + " |";
        for (Dimension d : kAllDimensions) {
            const AmceEstimate& e = v.dim(d);
            md += " " + (e.defined() ? md_num(e.amce) : std::string("-")) + " |";
        }
        md += "\n";
    }
    md += "\n";

    if (!report.mdd_rows.empty()) {
        md += "## Contrast distances per category\n\n";
        md += "| category | personas | distance |\n|---|---|---|\n";
        for (const MddRow& r : report.mdd_rows)
            md += "| " + r.category + " | " + r.persona_a + " vs " + r.persona_b + " | " +
                  md_num(r.value) + " |\n";
        md += "\n";
    }

    if (!report.alignment_rows.empty()) {
        md += "## Distance to human profiles\n\n";
        md += "| persona | human subgroup | distance |\n|---|---|---|\n";
        for (const AlignmentRow& r : report.alignment_rows)
            md += "| " + r.persona_id + " | " + r.subgroup + " | " + md_num(r.distance) + " |\n";
        md += "\n";
    }

    md += "## Preference flips\n\n";
    md += "vs baseline: " + std::to_string(report.flips.vs_baseline.size()) + " of " +
          std::to_string(report.flips.cells_vs_baseline) + " cells (" +
          md_num(report.flips.pct_vs_baseline) + "%)\n";
    if (report.flips.has_reference)
        md += "\nvs human reference: " + std::to_string(report.flips.vs_reference.size()) +
              " of " + std::to_string(report.flips.cells_vs_reference) + " cells (" +
              md_num(report.flips.pct_vs_reference) + "%)\n";
    md += "\n";

    if (!report.culture.empty()) {
        md += "## Culture-weighted human profiles\n\n";
        md += "| region | n |";
        for (Dimension d : kAllDimensions) md += " " + std::string(dimension_name(d)) + " |";
        md += "\n|---|---|";
        for (std::size_t i = 0; i < 9; ++i) md += "---|";
        md += "\n";
        for (const CultureRow& r : report.culture) {
            md += "| " + std::string(region_name(r.region)) + " | " + md_num(r.total_n) + " |";
            for (Dimension d : kAllDimensions)
                md += " " + md_num(r.amce[static_cast<std::size_t>(d)]) + " |";
            md += "\n";
        }
        md += "\n";
    }

    if (!report.warnings.empty()) {
        md += "## Warnings\n\n";
        for (const std::string& w : report.warnings) md += "- " + w + "\n";
        md += "\n";
    }
    return md;
}

void write_report(const AnalysisReport& report, const std::filesystem::path& out_dir,
                  ReportFormat format) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create report directory " + out_dir.string());

    const bool all = format == ReportFormat::All;
    if (all || format == ReportFormat::Json)
        write_text_file(out_dir / "report.json", report_to_json_text(report));
    if (all || format == ReportFormat::Markdown)
        write_text_file(out_dir / "report.md", report_to_markdown(report));
    if (all || format == ReportFormat::Csv) {
        for (const auto& [rel, content] : report_csv_files(report)) {
            const std::filesystem::path path = out_dir / rel;
            std::filesystem::create_directories(path.parent_path(), ec);
            if (ec) throw IoError("cannot create directory " + path.parent_path().string());
            write_text_file(path, content);
        }
    }
}

}  // namespace mmeval
