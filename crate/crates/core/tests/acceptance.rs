//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use patentforge::claims::{ClaimFeature, FeatureId};
use patentforge::dataset::{build_corpus, count_tokens, CorpusConfig, TrainingTuple};
use patentforge::drawings::{ComponentPair, ComponentRef, DrawingFigure, DrawingPage};
use patentforge::enrichment::{build_tuple, clean_specification};
use patentforge::generation::mock_generate;
use patentforge::mapper::{
    parse_gold, precision_at_k, suggest_mappings, GoldMapping, SuggestConfig, DEFAULT_THRESHOLD, DEFAULT_TOP_K,
};
use patentforge::service::{ComponentPatch, JobStatus, ProjectService, ServiceConfig, ServiceError};
use patentforge::similarity::{bleu_n, cosine, score_texts, TokenSequence};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

const VOCAB: &[&str] = &["a", "b", "c", "d", "e", "memory", "data", "node", "link", "bus"];

fn random_tokens(rng: &mut ChaCha8Rng, vocab: &[&'static str], min: usize, max: usize) -> Vec<&'static str> {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| *vocab.choose(rng).unwrap()).collect()
}

/// Counts occurrences of `gram` in `tokens` by scanning every position.
fn occurrences(tokens: &[&str], gram: &[&str]) -> usize {
    if gram.len() > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| tokens[i..i + gram.len()] == *gram)
        .count()
}

fn oracle_bleu(cand: &[&str], refr: &[&str], n: usize) -> f64 {
    if cand.len() < n {
        return 0.0;
    }
    let mut distinct: Vec<&[&str]> = Vec::new();
    for i in 0..=cand.len() - n {
        let gram = &cand[i..i + n];
        if !distinct.contains(&gram) {
            distinct.push(gram);
        }
    }
    let clipped: usize = distinct
        .iter()
        .map(|g| occurrences(cand, g).min(occurrences(refr, g)))
        .sum();
    if clipped == 0 {
        return 0.0;
    }
    let total = (cand.len() - n + 1) as f64;
    let bp = if cand.len() >= refr.len() {
        1.0
    } else {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    };
    bp * clipped as f64 / total
}

fn oracle_cosine(a: &[&str], b: &[&str]) -> f64 {
    let vocab: BTreeSet<&str> = a.iter().chain(b).copied().collect();
    let va: Vec<f64> = vocab.iter().map(|t| a.iter().filter(|x| *x == t).count() as f64).collect();
    let vb: Vec<f64> = vocab.iter().map(|t| b.iter().filter(|x| *x == t).count() as f64).collect();
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn metric_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let pairs = 2000;
    for _ in 0..pairs {
        let a = random_tokens(&mut rng, VOCAB, 1, 20);
        let b = random_tokens(&mut rng, VOCAB, 1, 20);
        let (sa, sb) = (TokenSequence::from_tokens(&a), TokenSequence::from_tokens(&b));
        for n in 1..=2 {
            let got = bleu_n(&sa, &sb, n);
            let want = oracle_bleu(&a, &b, n);
            ensure!((got - want).abs() <= 1e-12, "bleu_{n}({a:?}, {b:?}) = {got}, oracle {want}");
        }
        let got = cosine(&sa, &sb);
        let want = oracle_cosine(&a, &b);
        ensure!((got - want).abs() <= 1e-12, "cosine({a:?}, {b:?}) = {got}, oracle {want}");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{pairs} pairs, lengths 1-20, tolerance 1e-12, {:.2} s", elapsed.as_secs_f64()))
}

fn mapping_parameters() -> Outcome {
    ensure!(DEFAULT_THRESHOLD == 0.1 && DEFAULT_TOP_K == 5, "constants are {DEFAULT_THRESHOLD}/{DEFAULT_TOP_K}");
    let d = SuggestConfig::default();
    ensure!(d.threshold == 0.1 && d.k == 5, "SuggestConfig::default() = {d:?}");
    let s = ServiceConfig::default().suggest();
    ensure!(s == d, "service defaults {s:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let words = ["memory", "data", "store", "processor", "bus", "cache", "link", "node", "the", "a"];
    let mut checked = 0usize;
    for _ in 0..500 {
        let features: Vec<ClaimFeature> = (0..rng.random_range(1..=6))
            .map(|i| ClaimFeature::new(1, i, &random_tokens(&mut rng, &words, 1, 8).join(" ")))
            .collect();
        let components: Vec<ComponentPair> = (0..rng.random_range(0..=15))
            .map(|i| {
                let name = random_tokens(&mut rng, &words, 1, 3).join(" ");
                ComponentPair::new(&name, &(100 + i).to_string(), rng.random_range(1..=3)).unwrap()
            })
            .collect();
        let set = suggest_mappings(&features, &components, d).map_err(|e| e.to_string())?;
        for f in &features {
            let picked: Vec<_> = set.for_feature(f.id()).collect();
            ensure!(picked.len() <= 5, "feature {} got {} suggestions", f.id(), picked.len());
            let eligible = components
                .iter()
                .filter(|c| score_texts(&f.text, &c.name).combined >= 0.1)
                .count();
            ensure!(picked.len() == eligible.min(5), "feature {}: {} picked of {eligible} eligible", f.id(), picked.len());
            for e in &picked {
                let combined = e.score.unwrap().combined;
                ensure!(combined >= 0.1, "suggestion {} -> {} scored {combined}", e.feature_id, e.component_ref);
                checked += 1;
            }
        }
    }
    Ok(format!("defaults 0.1/5; 500 random projects, {checked} suggestions within limits"))
}

fn self_consistency_precision() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let figures = 10u32;
    let mut components = Vec::new();
    let mut gold_by_figure: BTreeMap<u32, Vec<ComponentPair>> = BTreeMap::new();
    let mut serial = 0usize;
    let word = |prefix: &str, n: usize| -> String {
        // letters only: component names may not contain digits
        let mut s = prefix.to_string();
        let mut n = n;
        loop {
            s.push((b'a' + (n % 26) as u8) as char);
            n /= 26;
            if n == 0 {
                break s;
            }
        }
    };
    for fig in 1..=figures {
        for j in 0..6 {
            let words = if j % 2 == 0 { 1 } else { 2 };
            let name = (0..words).map(|_| { serial += 1; word("gold", serial) }).collect::<Vec<_>>().join(" ");
            let c = ComponentPair::new(&name, &(100 + j).to_string(), fig).unwrap();
            gold_by_figure.entry(fig).or_default().push(c.clone());
            components.push(c);
        }
        for j in 0..10 {
            serial += 1;
            let c = ComponentPair::new(&word("decoy", serial), &(200 + j).to_string(), fig).unwrap();
            components.push(c);
        }
    }

    let mut features = Vec::new();
    let mut gold = Vec::new();
    for i in 0..100u32 {
        let fig = i % figures + 1;
        let pool = &gold_by_figure[&fig];
        let count = rng.random_range(1..=3);
        let chosen: Vec<&ComponentPair> = pool.choose_multiple(&mut rng, count).collect();
        let text = format!(
            "using {}",
            chosen.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(" with ")
        );
        let f = ClaimFeature::new(i / 4 + 1, i % 4, &text);
        gold.push(GoldMapping {
            feature_id: f.id(),
            component_refs: chosen.iter().map(|c| c.reference()).collect(),
        });
        features.push(f);
    }
    let set = suggest_mappings(&features, &components, SuggestConfig::default()).map_err(|e| e.to_string())?;
    let p5 = precision_at_k(&set, &gold, 5).map_err(|e| e.to_string())?;
    let p3 = precision_at_k(&set, &gold, 3).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure!(p5 == 1.0 && p3 == 1.0, "P@5 = {p5}, P@3 = {p3}");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "100 features, {} components, P@5 = {p5}, P@3 = {p3}, {:.2} s",
        components.len(),
        elapsed.as_secs_f64()
    ))
}

fn enrichment_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let words = ["memory", "data", "store", "processor", "bus", "cache", "link", "node", "virtual", "switch", "display"];
    let mut pairs_checked = 0;
    for project in 0..200 {
        let mut figures = Vec::new();
        let mut all = Vec::new();
        let mut numbers: Vec<u32> = (100..1000).collect();
        for fig in 1..=rng.random_range(1..=3u32) {
            let mut comps = Vec::new();
            for _ in 0..rng.random_range(1..=5) {
                let i = rng.random_range(0..numbers.len());
                let number = numbers.swap_remove(i);
                let name = random_tokens(&mut rng, &words, 1, 3).join(" ");
                comps.push(ComponentPair::new(&name, &number.to_string(), fig).unwrap());
            }
            let desc = random_tokens(&mut rng, &words, 0, 6).join(" ");
            all.extend(comps.clone());
            figures.push(DrawingFigure::new(fig, &format!("Page_{fig}"), "", comps, &desc));
        }
        for index in 0..rng.random_range(1..=4) {
            let feature = ClaimFeature::new(project + 1, index, &random_tokens(&mut rng, &words, 1, 10).join(" "));
            let mapped: Vec<ComponentPair> = all.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
            let tuple = build_tuple(&feature, &mapped, &figures, false).map_err(|e| e.to_string())?;
            for text in [tuple.serialized.clone(), mock_generate(&tuple.serialized)] {
                let cleaned = clean_specification(&text);
                ensure!(
                    !cleaned.cleaned.contains('<') && !cleaned.cleaned.contains('>'),
                    "angle brackets survive cleaning: {}",
                    cleaned.cleaned
                );
                ensure!(cleaned.warnings.is_empty(), "unexpected foreign tokens in {text}");
                for c in &mapped {
                    let plain = format!("{} {}", c.name, c.number);
                    ensure!(cleaned.cleaned.contains(&plain), "`{plain}` missing from {}", cleaned.cleaned);
                    pairs_checked += 1;
                }
                let again = clean_specification(&cleaned.cleaned);
                ensure!(again.cleaned == cleaned.cleaned, "clean is not idempotent on {}", cleaned.cleaned);
            }
        }
    }
    Ok(format!("200 projects, {pairs_checked} name/number pairs recovered, cleaning idempotent"))
}

fn dataset_builder() -> Outcome {
    const EXPECTED_TUPLES: usize = 10;
    let input = fixtures().join("patents");
    let out_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (run, parallelism) in [(0, 1), (1, 1), (2, 4), (3, 4)] {
        let out = out_dir.path().join(format!("run{run}.jsonl"));
        let config = CorpusConfig {
            parallelism,
            ..Default::default()
        };
        let stats = build_corpus(&input, &out, &config).map_err(|e| e.to_string())?;
        ensure!(stats.documents_accepted == 3, "accepted {} documents", stats.documents_accepted);
        ensure!(stats.tuples_emitted == EXPECTED_TUPLES, "emitted {} tuples", stats.tuples_emitted);
        ensure!(
            stats.tuples_emitted + stats.features_dropped == stats.features_total,
            "conservation: {} + {} != {}",
            stats.tuples_emitted,
            stats.features_dropped,
            stats.features_total
        );
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure!(outputs.windows(2).all(|w| w[0] == w[1]), "outputs differ across runs or parallelism");
    let text = String::from_utf8(outputs[0].clone()).map_err(|e| e.to_string())?;
    let mut max_seen = 0;
    let mut lines = 0;
    for line in text.lines() {
        let t: TrainingTuple = serde_json::from_str(line).map_err(|e| e.to_string())?;
        for (field, claimed) in [(&t.input_text, t.token_counts.input), (&t.target_text, t.token_counts.target)] {
            let n = count_tokens(field);
            ensure!(n == claimed && n <= 512, "{} {}: {n} tokens, recorded {claimed}", t.doc_id, t.feature_id);
            max_seen = max_seen.max(n);
        }
        lines += 1;
    }
    ensure!(lines == EXPECTED_TUPLES, "{lines} JSONL lines");
    Ok(format!(
        "3 patents -> {lines} tuples, longest {max_seen} tokens, identical across 2 runs x parallelism 1/4"
    ))
}

fn end_to_end_mock() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let service = ProjectService::with_mock(dir.path()).map_err(|e| e.to_string())?;
    let p = service.create_project("End to end", None).map_err(|e| e.to_string())?;
    let id = p.project_id.clone();
    let claims = std::fs::read_to_string(fixtures().join("project/claims.txt")).map_err(|e| e.to_string())?;
    let pages: Vec<DrawingPage> =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("project/drawings.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let p = service.upload_claims(&id, &claims, Some(p.revision)).map_err(|e| e.to_string())?;
    ensure!(p.claims.len() == 2 && p.features().len() == 4, "{} claims, {} features", p.claims.len(), p.features().len());
    let p = service.upload_drawings(&id, &pages, Some(p.revision)).map_err(|e| e.to_string())?;
    ensure!(p.figures.len() == 1 && p.components().len() == 3, "{} figures, {} components", p.figures.len(), p.components().len());

    let gold = parse_gold(&std::fs::read_to_string(fixtures().join("project/gold.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut revision = p.revision;
    for g in &gold {
        for r in &g.component_refs {
            revision = service.put_mapping(&id, g.feature_id, r, Some(revision)).map_err(|e| e.to_string())?.revision;
        }
    }
    let p = service.get_project(&id).map_err(|e| e.to_string())?;
    ensure!(p.mappings.len() == 4, "{} mappings", p.mappings.len());

    let job = service.start_generation(&id, "mock", false).map_err(|e| e.to_string())?;
    let job = service.wait_for_job(&id, &job.job_id, Duration::from_secs(5)).map_err(|e| e.to_string())?;
    ensure!(job.status == JobStatus::Done, "job {:?}: {:?}", job.status, job.error);
    let p = service.get_project(&id).map_err(|e| e.to_string())?;
    let record = p.generation.ok_or("no generation record")?;
    let order: Vec<FeatureId> = record.results.iter().map(|r| r.feature_id).collect();
    let expected: Vec<FeatureId> = p.claims.iter().flat_map(|c| c.features.iter().map(|f| f.id())).collect();
    ensure!(order == expected, "result order {order:?}");
    ensure!(record.results.iter().all(|r| r.is_ok()), "not every result is ok");

    let text = service.specification(&id, false).map_err(|e| e.to_string())?.text;
    for needle in ["FIG. 1", "memory 104", "processor 106", "network interface 108"] {
        ensure!(text.contains(needle), "`{needle}` missing from specification:\n{text}");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("4 ok results in order, FIG. 1 + 3 components present, {:.2} s", elapsed.as_secs_f64()))
}

const CLAIM_VARIANTS: &[&str] = &[
    "1. A system comprising: a memory storing data; a processor executing instructions.\n2. The system of claim 1, wherein a bus couples the processor to the memory.",
    "1. A system comprising: a memory storing data; a processor reading the memory.\n2. The system of claim 1, wherein a bus couples the processor to the memory.",
    "1. A method comprising: storing data in a memory.",
    "1. A system comprising: a memory storing data; a processor executing instructions; a cache holding data.",
];

fn drawing_variants() -> Vec<Vec<DrawingPage>> {
    vec![
        vec![DrawingPage::new("Page_1", "FIG. 1 memory 104 processor 106 bus 108")],
        vec![
            DrawingPage::new("Page_1", "FIG. 1 memory 104 processor 106"),
            DrawingPage::new("Page_2", "FIG. 2 cache 110 bus 108"),
        ],
        vec![DrawingPage::new("Page_1", "FIG. 1 main memory 104 cpu 106")],
    ]
}

fn service_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let service = ProjectService::with_mock(dir.path()).map_err(|e| e.to_string())?;
    let id = service.create_project("Integrity", None).map_err(|e| e.to_string())?.project_id;
    let path = service.store().path(&id);
    let drawings = drawing_variants();
    let names = ["memory", "cpu", "bus", "storage unit", "cache"];
    let (mut stale_writes, mut rejected, mut changed) = (0, 0, 0);

    for call in 0..500 {
        let before = service.get_project(&id).map_err(|e| e.to_string())?;
        let bytes_before = std::fs::read(&path).map_err(|e| e.to_string())?;
        let stale = rng.random_bool(0.25) && before.revision > 1;
        let expected = Some(if stale { before.revision - rng.random_range(1..before.revision) } else { before.revision });
        let features = before.features();
        let components = before.components();
        let pick_feature = |rng: &mut ChaCha8Rng| {
            features
                .choose(rng)
                .map(|f| f.id())
                .filter(|_| rng.random_bool(0.9))
                .unwrap_or(FeatureId::new(9, 9))
        };
        let pick_component = |rng: &mut ChaCha8Rng| -> ComponentRef {
            components
                .choose(rng)
                .map(|c| c.reference())
                .filter(|_| rng.random_bool(0.9))
                .unwrap_or_else(|| "7:999".parse().unwrap())
        };

        let op = rng.random_range(0..8);
        let result = match op {
            0 => service.upload_claims(&id, CLAIM_VARIANTS.choose(&mut rng).unwrap(), expected),
            1 => {
                let text = if rng.random_bool(0.2) { "1. A.\n1. B." } else { CLAIM_VARIANTS.choose(&mut rng).unwrap() };
                service.upload_claims(&id, text, expected)
            }
            2 => service.upload_drawings(&id, drawings.choose(&mut rng).unwrap(), expected),
            3 => {
                let r = pick_component(&mut rng);
                let patch = ComponentPatch {
                    name: rng.random_bool(0.6).then(|| names.choose(&mut rng).unwrap().to_string()),
                    number: rng.random_bool(0.3).then(|| rng.random_range(100..115).to_string()),
                };
                service.patch_component(&id, r.figure, r.number.as_str(), &patch, expected)
            }
            4 => service.put_mapping(&id, pick_feature(&mut rng), &pick_component(&mut rng), expected),
            5 => {
                let existing: Vec<_> = before.mappings.entries.iter().map(|e| (e.feature_id, e.component_ref.clone())).collect();
                let (f, c) = match existing.choose(&mut rng) {
                    Some(pair) if rng.random_bool(0.7) => pair.clone(),
                    _ => (pick_feature(&mut rng), pick_component(&mut rng)),
                };
                service.delete_mapping(&id, f, &c, expected)
            }
            6 => service.accept_suggestions(&id, None, None, expected),
            _ => service.patch_figure(&id, rng.random_range(1..=2), "an updated view", expected),
        };

        let after = service.get_project(&id).map_err(|e| e.to_string())?;
        let errors = after.integrity_errors();
        ensure!(errors.is_empty(), "call {call} (op {op}) broke integrity: {errors:?}");
        if stale {
            stale_writes += 1;
            ensure!(
                matches!(result, Err(ServiceError::Conflict { .. })),
                "call {call} (op {op}) with stale revision was not rejected: {result:?}"
            );
        }
        match &result {
            Err(_) => {
                rejected += 1;
                let bytes_after = std::fs::read(&path).map_err(|e| e.to_string())?;
                ensure!(bytes_after == bytes_before, "call {call} (op {op}) failed but changed the stored project");
            }
            Ok(p) => {
                ensure!(
                    p.revision == before.revision || p.revision == before.revision + 1,
                    "revision jumped from {} to {}",
                    before.revision,
                    p.revision
                );
                if p.revision > before.revision {
                    changed += 1;
                }
            }
        }
    }

    // Two writers holding the same revision: exactly one wins.
    let base = service.get_project(&id).map_err(|e| e.to_string())?.revision;
    let barrier = Arc::new(std::sync::Barrier::new(2));
    let handles: Vec<_> = (0..2)
        .map(|i| {
            let service = service.clone();
            let id = id.clone();
            let barrier = barrier.clone();
            std::thread::spawn(move || {
                barrier.wait();
                service.upload_claims(&id, CLAIM_VARIANTS[i], Some(base))
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let wins = results.iter().filter(|r| r.is_ok()).count();
    ensure!(wins == 1, "{wins} racing writers succeeded");
    ensure!(
        results.iter().any(|r| matches!(r, Err(ServiceError::Conflict { .. }))),
        "losing writer did not get a conflict"
    );

    let json = service.export_project(&id).map_err(|e| e.to_string())?;
    let other = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fresh = ProjectService::with_mock(other.path()).map_err(|e| e.to_string())?;
    let imported = fresh.import_project(&json, false).map_err(|e| e.to_string())?;
    ensure!(imported.equivalent(&service.get_project(&id).map_err(|e| e.to_string())?), "import differs from export");
    ensure!(fresh.export_project(&id).map_err(|e| e.to_string())? == json, "re-export differs");

    Ok(format!(
        "500 calls: {changed} changes, {rejected} rejected ({stale_writes} stale, all refused), race and export/import ok"
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("metric oracle equivalence", metric_oracle),
        ("mapping parameters 0.1 / top-5", mapping_parameters),
        ("self-consistency precision@5 and @3", self_consistency_precision),
        ("enrichment round-trip", enrichment_round_trip),
        ("dataset builder fixtures", dataset_builder),
        ("end-to-end on mock backend", end_to_end_mock),
        ("service integrity", service_integrity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  [{}] {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL  [{}] {name}: {reason}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
