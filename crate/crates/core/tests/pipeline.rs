use guildtree::chain::{collect_draws, resume_chain, run_chain};
use guildtree::inference::{guild_count_distribution, summarize};
use guildtree::simulate::{simulate, SimSpec};
use guildtree::{ChainCheckpoint, ChainConfig, ChainSettings, CommunityData, DrawSink, Error, Family, PosteriorDraw};

struct Halting {
    draws: Vec<PosteriorDraw>,
    saved: Option<ChainCheckpoint>,
    halt_at: usize,
}

impl DrawSink for Halting {
    fn accept(&mut self, draw: PosteriorDraw) -> guildtree::Result<()> {
        self.draws.push(draw);
        Ok(())
    }

    fn checkpoint(&mut self, cp: &ChainCheckpoint) -> guildtree::Result<()> {
        self.saved = Some(cp.clone());
        if cp.emitted >= self.halt_at {
            return Err(Error::Sink("halt".into()));
        }
        Ok(())
    }
}

fn probit_data(seed: u64) -> CommunityData {
    let sim = simulate(&SimSpec::two_guild_probit(seed)).unwrap();
    sim.data.split_holdout().unwrap().0
}

fn zip_data() -> CommunityData {
    let slopes = vec![
        vec![vec![0.8], vec![0.8], vec![-0.4]],
        vec![vec![0.0], vec![0.5], vec![0.5]],
    ];
    let mut spec = SimSpec::from_species_slopes(Family::Zip, 120, vec![1.0, 0.5, 1.2], &slopes).unwrap();
    spec.seed = 9;
    simulate(&spec).unwrap().data
}

fn interrupted_equals_uninterrupted(data: &CommunityData, family: Family) {
    let mut cfg = ChainConfig::new(
        family,
        ChainSettings {
            iterations: 400,
            thin: 2,
            burn: 10,
            seed: 17,
        },
        0.05,
    );
    cfg.checkpoint_every = 15;
    let (full, _) = collect_draws(data, &cfg).unwrap();

    let mut sink = Halting {
        draws: Vec::new(),
        saved: None,
        halt_at: 60,
    };
    assert!(run_chain(data, &cfg, &mut sink).is_err());
    let cp = sink.saved.take().unwrap();
    assert_eq!(cp.emitted, 60);
    sink.draws.truncate(cp.emitted);
    sink.halt_at = usize::MAX;
    resume_chain(data, &cfg, cp, &mut sink).unwrap();
    assert_eq!(sink.draws, full);
}

#[test]
fn probit_resume_matches_uninterrupted_chain() {
    interrupted_equals_uninterrupted(&probit_data(2), Family::Probit);
}

#[test]
fn abundance_resume_matches_uninterrupted_chain() {
    interrupted_equals_uninterrupted(&zip_data(), Family::Zip);
}

#[test]
fn alpha_extremes_fix_the_guild_count() {
    let data = probit_data(3);
    let settings = ChainSettings {
        iterations: 300,
        thin: 1,
        burn: 20,
        seed: 5,
    };
    for (alpha, guilds) in [(0.0, 1), (1.0, 6)] {
        let (draws, _) = collect_draws(&data, &ChainConfig::new(Family::Probit, settings, alpha)).unwrap();
        let pmf = guild_count_distribution(&draws, 0).unwrap();
        assert_eq!(pmf.len(), 1, "alpha {alpha}");
        assert_eq!(pmf[&guilds], 1.0, "alpha {alpha}");
    }
}

#[test]
fn pooled_fit_scores_and_summarises() {
    let sim = simulate(&SimSpec::two_guild_probit(4)).unwrap();
    let (fit, hold) = sim.data.split_holdout().unwrap();
    let settings = ChainSettings {
        iterations: 600,
        thin: 2,
        burn: 20,
        seed: 8,
    };
    let (draws, _) = collect_draws(&fit, &ChainConfig::new(Family::Probit, settings, 0.0)).unwrap();
    let s = summarize(&draws, Some(&fit), hold.as_ref()).unwrap();
    assert_eq!(s.n_draws, 280);
    assert_eq!(s.periods[0].mode.partition.encode(), "1+2+3+4+5+6");
    for row in &s.periods[0].cooccurrence {
        assert!(row.iter().all(|&v| v == 1.0));
    }
    let scores = s.scores.unwrap();
    assert!(scores.p_eff > 0.0 && scores.p_eff < 20.0, "{}", scores.p_eff);
    assert!((scores.waic - -2.0 * (scores.lppd - scores.p_eff)).abs() < 1e-9);
    assert!(scores.holdout_neg2_lppd.unwrap() > 0.0);
}
