use std::sync::Arc;
use std::time::Duration;

use secgames::prompt::{
    ExternalPolicy, InfoContext, ReasoningPolicy, ResponseCache, Role, Sampling, StructuredPrompt, StubConfig, StubMode,
    StubServer,
};
use secgames::{ActionSpace, Distribution, GameError};

fn rps() -> ActionSpace {
    ActionSpace::new(["Rock", "Paper", "Scissors"]).unwrap()
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Independent draws: the expected L1 gap shrinks like 1/sqrt(n), so it
/// halves when the sample count quadruples.
#[test]
fn multinomial_gap_follows_the_square_root_law() {
    let truth = Distribution::new(rps(), vec![0.5, 0.3, 0.2]).unwrap();
    let stub = StubServer::start(StubConfig::new(truth.clone(), StubMode::Multinomial)).unwrap();
    let policy = ExternalPolicy::new(stub.url(), rps());
    let prompt = StructuredPrompt::new("x", "play").unwrap();
    let info = InfoContext::new(Role::Row);
    let gaps = |n: usize| -> Vec<f64> {
        (0..150)
            .map(|seed| {
                let d = policy.evaluate(&prompt, &info, Sampling { seed, sample_count: n }).unwrap();
                d.l1_distance(&truth)
            })
            .collect()
    };
    let (m0, s0) = mean_and_se(&gaps(100));
    let (m1, s1) = mean_and_se(&gaps(400));
    let sigma = (s1 * s1 + s0 * s0 / 4.0).sqrt();
    assert!((m1 - m0 / 2.0).abs() <= 3.0 * sigma, "gap {m1} after {m0}, sigma {sigma}");
}

#[test]
fn responses_persist_across_cache_instances() {
    let stub = StubServer::start(StubConfig::new(Distribution::uniform(rps()), StubMode::Multinomial)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let prompt = StructuredPrompt::new("x", "play").unwrap();
    let info = InfoContext::new(Role::Col).with("budget", "3");
    let sampling = Sampling { seed: 8, sample_count: 40 };

    let live = ExternalPolicy::new(stub.url(), rps()).with_cache(Arc::new(ResponseCache::open(&path).unwrap()));
    let first = live.evaluate(&prompt, &info, sampling).unwrap();
    let other_seed = live.evaluate(&prompt, &info, Sampling { seed: 9, ..sampling }).unwrap();
    assert_eq!(live.request_count(), 2);

    let reopened = Arc::new(ResponseCache::open(&path).unwrap());
    assert_eq!(reopened.len(), 2);
    let offline = ExternalPolicy::new("http://127.0.0.1:9/unused", rps()).with_cache(reopened);
    assert_eq!(offline.evaluate(&prompt, &info, sampling).unwrap(), first);
    assert_eq!(offline.evaluate(&prompt, &info, Sampling { seed: 9, ..sampling }).unwrap(), other_seed);
    assert_eq!(offline.request_count(), 0);
}

#[test]
fn unreachable_endpoint_is_retried_then_reported() {
    // Bind and drop to obtain a port with nothing listening.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let policy = ExternalPolicy::with_options(format!("http://127.0.0.1:{port}/policy"), rps(), Duration::from_secs(2), 3);
    let err = policy
        .evaluate(&StructuredPrompt::new("x", "play").unwrap(), &InfoContext::new(Role::Row), Sampling::default())
        .unwrap_err();
    assert!(matches!(err, GameError::EndpointUnreachable(_)), "{err:?}");
    assert_eq!(policy.request_count(), 4);
}
