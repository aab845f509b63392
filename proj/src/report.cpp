#include "scrhet/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "scrhet/chain_io.hpp"
#include "scrhet/dataset_io.hpp"

namespace scrhet {

namespace fs = std::filesystem;

namespace {

std::string num(double x) { return fmt::format("{:.6g}", x); }

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return sample_quantile(v, 0.5);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Model labels in configuration order.
std::vector<std::string> model_order(const StudyResult& r) {
    std::vector<std::string> out;
    for (const auto& run : r.config.models) out.push_back(run.spec.label());
    return out;
}

std::vector<const FitRecord*> fits_of(const StudyResult& r, int scenario, const std::string& model) {
    std::vector<const FitRecord*> out;
    for (const auto& f : r.fits) {
        if (f.scenario == scenario && f.model == model) out.push_back(&f);
    }
    return out;
}

}  // namespace

bool in_comparison(const FitRecord& r) {
    return r.status == "ok" && r.converged && r.kind != ModelKind::fe && std::isfinite(r.sse) &&
           std::isfinite(r.waic);
}

std::vector<DeltaRow> compute_deltas(const StudyResult& r) {
    std::vector<DeltaRow> out;
    for (const auto& d : r.datasets) {
        std::vector<const FitRecord*> group;
        for (const auto& f : r.fits) {
            if (f.scenario == d.scenario && f.replicate == d.replicate && in_comparison(f)) group.push_back(&f);
        }
        if (group.empty()) continue;
        std::vector<double> sse, waic;
        for (const auto* f : group) {
            sse.push_back(f->sse);
            waic.push_back(f->waic);
        }
        const auto ds = delta_scores(sse);
        const auto dw = delta_scores(waic);
        for (std::size_t k = 0; k < group.size(); ++k) {
            out.push_back({d.scenario, d.replicate, group[k]->model, sse[k], ds[k], waic[k], dw[k]});
        }
    }
    return out;
}

std::vector<WinCount> compute_win_counts(const StudyResult& r) {
    std::vector<WinCount> out;
    for (int sc : r.config.scenarios) {
        std::map<std::string, WinCount> counts;
        for (const auto& label : model_order(r)) counts[label] = {sc, label, 0, 0, 0};
        for (const auto& d : r.datasets) {
            if (d.scenario != sc) continue;
            std::vector<const FitRecord*> group;
            for (const auto& f : r.fits) {
                if (f.scenario == sc && f.replicate == d.replicate && in_comparison(f)) group.push_back(&f);
            }
            if (group.empty()) continue;
            std::vector<double> sse, waic;
            for (const auto* f : group) {
                sse.push_back(f->sse);
                waic.push_back(f->waic);
                ++counts[f->model].compared;
            }
            ++counts[group[best_index(sse)]->model].sse_wins;
            ++counts[group[best_index(waic)]->model].waic_wins;
        }
        for (const auto& label : model_order(r)) {
            const auto& run = *std::find_if(r.config.models.begin(), r.config.models.end(),
                                            [&](const ModelRun& m) { return m.spec.label() == label; });
            if (run.spec.kind == ModelKind::fe || !r.config.fits(run, sc)) continue;
            out.push_back(counts[label]);
        }
    }
    return out;
}

std::string provenance_line(const StudyResult& r) {
    return fmt::format("# scrhet {} seed={} config={}\n", kVersion, r.seed, fingerprint(canonical_config(r.config)));
}

std::string table1_csv(const StudyResult& r) {
    std::string out = provenance_line(r);
    out += "scenario,eta,phi,surface,replicates,detected_mean,detected_q025,detected_q975,detections_mean,"
           "detections_q025,detections_q975,per_detector,per_individual,per_detected\n";
    for (int sc : r.config.scenarios) {
        std::vector<double> det, dets, pd, pi, pdd;
        for (const auto& d : r.datasets) {
            if (d.scenario != sc) continue;
            det.push_back(d.summary.n_detected);
            dets.push_back(static_cast<double>(d.summary.detections));
            pd.push_back(d.summary.per_detector);
            pi.push_back(d.summary.per_individual);
            pdd.push_back(d.summary.per_detected);
        }
        if (det.empty()) continue;
        const Scenario s = r.config.scenario(sc);
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", sc, num(s.eta), num(s.phi), to_string(s.kind),
                           det.size(), num(mean(det)), num(sample_quantile(det, 0.025)),
                           num(sample_quantile(det, 0.975)), num(mean(dets)), num(sample_quantile(dets, 0.025)),
                           num(sample_quantile(dets, 0.975)), num(mean(pd)), num(mean(pi)), num(mean(pdd)));
    }
    return out;
}

std::string convergence_csv(const StudyResult& r) {
    std::string out = provenance_line(r);
    out += "scenario,model,attempted,converged,failed,rate\n";
    for (int sc : r.config.scenarios) {
        for (const auto& label : model_order(r)) {
            const auto fits = fits_of(r, sc, label);
            if (fits.empty()) continue;
            const auto conv = std::count_if(fits.begin(), fits.end(), [](auto* f) { return f->converged; });
            const auto failed = std::count_if(fits.begin(), fits.end(), [](auto* f) { return f->status != "ok"; });
            out += fmt::format("{},{},{},{},{},{}\n", sc, label, fits.size(), conv, failed,
                               num(static_cast<double>(conv) / static_cast<double>(fits.size())));
        }
    }
    return out;
}

std::string efficiency_csv(const StudyResult& r) {
    std::string out = provenance_line(r);
    out += "scenario,model,converged,mean_runtime_seconds,parameter,mean_ess,mean_efficiency\n";
    for (int sc : r.config.scenarios) {
        for (const auto& label : model_order(r)) {
            std::vector<const FitRecord*> conv;
            for (const auto* f : fits_of(r, sc, label)) {
                if (f->converged && std::isfinite(f->runtime)) conv.push_back(f);
            }
            if (conv.empty()) continue;
            std::vector<double> runtimes;
            for (const auto* f : conv) runtimes.push_back(f->runtime);
            std::vector<double> all_eff;
            for (const auto& p : conv.front()->report.parameters) {
                std::vector<double> ess, eff;
                for (const auto* f : conv) {
                    const double e = f->report.get(p.name).ess;
                    ess.push_back(e);
                    eff.push_back(f->runtime > 0.0 ? e / f->runtime : std::numeric_limits<double>::quiet_NaN());
                }
                all_eff.push_back(mean(eff));
                out += fmt::format("{},{},{},{},{},{},{}\n", sc, label, conv.size(), num(mean(runtimes)), p.name,
                                   num(mean(ess)), num(mean(eff)));
            }
            out += fmt::format("{},{},{},{},{},,{}\n", sc, label, conv.size(), num(mean(runtimes)), "mean",
                               num(mean(all_eff)));
        }
    }
    return out;
}

std::string metrics_csv(const StudyResult& r) {
    std::string out = provenance_line(r);
    out += "scenario,replicate,model,status,converged,n_true,N_mean,N_q025,N_q975,RB_N,CV_N,covered,SSE,WAIC,p_w\n";
    for (const auto& f : r.fits) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", f.scenario, f.replicate, f.model, f.status,
                           f.converged ? 1 : 0, f.n_true, num(f.n.mean), num(f.n.q025), num(f.n.q975), num(f.rb),
                           num(f.cv), f.covered ? 1 : 0, num(f.sse), num(f.waic), num(f.p_w));
    }
    return out;
}

std::string metric_summary_csv(const StudyResult& r) {
    std::string out = provenance_line(r);
    out += "scenario,model,attempted,converged,median_RB_N,median_CV_N,coverage,median_SSE\n";
    for (int sc : r.config.scenarios) {
        for (const auto& label : model_order(r)) {
            const auto fits = fits_of(r, sc, label);
            if (fits.empty()) continue;
            std::vector<double> rb, cv, sse;
            std::vector<bool> cov;
            for (const auto* f : fits) {
                if (!f->converged) continue;
                rb.push_back(f->rb);
                cv.push_back(f->cv);
                sse.push_back(f->sse);
                cov.push_back(f->covered);
            }
            const double coverage =
                cov.empty() ? std::numeric_limits<double>::quiet_NaN()
                            : static_cast<double>(std::count(cov.begin(), cov.end(), true)) / static_cast<double>(cov.size());
            out += fmt::format("{},{},{},{},{},{},{},{}\n", sc, label, fits.size(), rb.size(), num(median(rb)),
                               num(median(cv)), num(coverage), num(median(sse)));
        }
    }
    return out;
}

std::string diagnostics_csv(const StudyResult& r) {
    std::string out = provenance_line(r);
    out += "scenario,replicate,model,parameter,rhat,ess\n";
    for (const auto& f : r.fits) {
        for (const auto& p : f.report.parameters) {
            out += fmt::format("{},{},{},{},{},{}\n", f.scenario, f.replicate, f.model, p.name, num(p.rhat), num(p.ess));
        }
    }
    return out;
}

std::string deltas_csv(const StudyResult& r) {
    std::string out = provenance_line(r);
    out += "scenario,replicate,model,SSE,delta_SSE,WAIC,delta_WAIC\n";
    for (const auto& d : compute_deltas(r)) {
        out += fmt::format("{},{},{},{},{},{},{}\n", d.scenario, d.replicate, d.model, num(d.sse), num(d.delta_sse),
                           num(d.waic), num(d.delta_waic));
    }
    return out;
}

std::string win_counts_csv(const StudyResult& r) {
    std::string out = provenance_line(r);
    out += "scenario,model,compared,sse_wins,waic_wins,sse_win_fraction,waic_win_fraction\n";
    for (const auto& w : compute_win_counts(r)) {
        int replicates = 0;
        for (const auto& d : r.datasets) {
            if (d.scenario != w.scenario) continue;
            const bool any = std::any_of(r.fits.begin(), r.fits.end(), [&](const FitRecord& f) {
                return f.scenario == d.scenario && f.replicate == d.replicate && in_comparison(f);
            });
            replicates += any ? 1 : 0;
        }
        const double denom = replicates > 0 ? replicates : std::numeric_limits<double>::quiet_NaN();
        out += fmt::format("{},{},{},{},{},{},{}\n", w.scenario, w.model, w.compared, w.sse_wins, w.waic_wins,
                           num(w.sse_wins / denom), num(w.waic_wins / denom));
    }
    return out;
}

std::string surfaces_csv(const StudyResult& r, const fs::path& study_dir) {
    std::string out = provenance_line(r);
    out += "scenario,replicate,model,detector,x,y,truth_p0,truth_cluster_p0,predicted_p0\n";
    for (int sc : r.config.scenarios) {
        const fs::path path = study_dir / "datasets" / (dataset_key(sc, 1) + ".txt");
        if (!fs::exists(path)) continue;
        const Dataset d = read_dataset(path);
        if (!d.truth) continue;
        const DetectorGrid g = d.grid();
        for (const auto& f : r.fits) {
            if (f.scenario != sc || f.replicate != 1 || f.surface_mean.size() != static_cast<std::size_t>(g.size())) continue;
            const auto cluster = reference_surface(d, f.aggregation, SurfaceReference::cluster);
            for (int j = 0; j < g.size(); ++j) {
                const auto idx = static_cast<std::size_t>(j);
                out += fmt::format("{},{},{},{},{},{},{},{},{}\n", sc, 1, f.model, j, num(g[j].x), num(g[j].y),
                                   num(d.truth->p0[idx]), num(cluster[idx]), num(f.surface_mean[idx]));
            }
        }
    }
    return out;
}

std::vector<std::string> write_report(const StudyResult& r, const fs::path& study_dir, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const std::vector<std::pair<std::string, std::string>> files{
        {"table1_data_summary.csv", table1_csv(r)},
        {"table2_convergence.csv", convergence_csv(r)},
        {"efficiency.csv", efficiency_csv(r)},
        {"metrics.csv", metrics_csv(r)},
        {"metric_summary.csv", metric_summary_csv(r)},
        {"diagnostics.csv", diagnostics_csv(r)},
        {"deltas.csv", deltas_csv(r)},
        {"win_counts.csv", win_counts_csv(r)},
        {"surfaces.csv", surfaces_csv(r, study_dir)},
    };
    std::vector<std::string> names;
    for (const auto& [name, text] : files) {
        write_file_atomic(out_dir / name, text);
        names.push_back(name);
    }
    return names;
}

}  // namespace scrhet
