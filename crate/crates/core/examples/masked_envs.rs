//! Steps a masked training stream in every concrete setting and shows which
//! fields the setting lets a method see.

use lattice_cl::envsim::{wrap_for_setting, Environment, EnvironmentSpec, World};
use lattice_cl::evaluation::{default_family, default_schedule};
use lattice_cl::taxonomy::Catalog;

fn main() -> lattice_cl::Result<()> {
    let catalog = Catalog::canonical();
    println!("{:<38} {:<24} {:>6} {:>9}", "setting", "family", "task id", "boundary");
    for node in catalog.concrete() {
        let a = &node.assumptions;
        let spec = EnvironmentSpec::new(default_family(a.branch), default_schedule(a, 2), 2, 300);
        let world = World::build(&spec, 7)?;
        let mut env = wrap_for_setting(world.train_env(0)?, a)?;
        let mut obs = env.reset()?;
        let mut boundary = None;
        for t in 0..250 {
            if obs.episode_done {
                if env.is_exhausted() {
                    break;
                }
                env.reset()?;
            }
            obs = env.step(t % env.action_space().n)?.0;
            boundary = boundary.or(obs.boundary.map(|_| ()));
        }
        println!(
            "{:<38} {:<24} {:>6} {:>9}",
            node.name,
            spec.family.name(),
            obs.task_id.map_or("-".into(), |t| t.to_string()),
            if boundary.is_some() { "seen" } else { "hidden" }
        );
    }
    Ok(())
}
