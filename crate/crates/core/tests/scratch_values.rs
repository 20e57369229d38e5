// Exploratory: prints candidate golden values. Deleted before finalizing.
use pipesim::executor::{accumulated_delay, peak_activations, replay, CommModel};
use pipesim::model::{PipelineSpec, WarmupPlan};
use pipesim::oracle::optimal_makespan;
use pipesim::scheduler::{generate_schedule, generate_with_stats, GenConfig};
use pipesim::time::ms;

#[test]
fn print_golden_candidates() {
    // ideal_zb
    let spec = PipelineSpec::uniform(4, 12, ms(10));
    let plan = WarmupPlan::new(vec![7, 5, 3, 1]);
    let (timeline, stats) = generate_with_stats(&spec, &plan, &GenConfig::default_ms()).unwrap();
    println!("ideal_zb makespan = {} ms, steps = {}", timeline.makespan / 1000, stats.steps);
    println!("ideal_zb peaks = {:?}", peak_activations(&timeline));
    println!("ideal_zb warmups = {:?}", timeline.measured_warmup_counts());
    let orders = timeline.orders();
    for c0 in [10, 20] {
        let injected = spec.clone().with_comm(vec![ms(c0), 0, 0]);
        let out = replay(&injected, &orders, CommModel::Decoupled).unwrap();
        println!(
            "c0={c0} -> makespan {} ms, acc {} ms",
            out.timeline.makespan / 1000,
            out.metrics.accumulated_delay_ms / 1000
        );
    }

    // adapted plan x=[9,5,3,1] at its own c
    let spec9 = PipelineSpec::uniform(4, 12, ms(10)).with_comm(vec![ms(100), 0, 0]);
    let plan9 = WarmupPlan::new(vec![9, 5, 3, 1]);
    let t9 = generate_schedule(&spec9, &plan9, &GenConfig::default_ms()).unwrap();
    println!("adapted peaks = {:?}", peak_activations(&t9));
    let t9b = generate_schedule(&spec9.zero_comm(), &plan9, &GenConfig::default_ms()).unwrap();
    println!("adapted@c0 peaks = {:?}", peak_activations(&t9b));

    // S=2 N=2 tiny instance
    let tiny = PipelineSpec::uniform(2, 2, ms(10));
    let gen = generate_schedule(&tiny, &WarmupPlan::new(vec![2, 1]), &GenConfig::default_ms()).unwrap();
    println!("S2N2 generator makespan = {} ms", gen.makespan / 1000);
    let oracle = optimal_makespan(&tiny, None).unwrap();
    println!("S2N2 oracle = {} ms", oracle.makespan / 1000);

    let tiny_c10 = PipelineSpec::uniform(2, 2, ms(10)).with_comm(vec![ms(10)]);
    let oracle_c10 = optimal_makespan(&tiny_c10, None).unwrap();
    println!("S2N2 c=10 oracle = {} ms", oracle_c10.makespan / 1000);

    // HOL construction S=2 N=3 c=30, order generated at c=0 with x=[3,1]
    let hol_spec = PipelineSpec::uniform(2, 3, ms(10));
    let hol_plan = WarmupPlan::new(vec![3, 1]);
    let hol_timeline = generate_schedule(&hol_spec, &hol_plan, &GenConfig::default_ms()).unwrap();
    let hol_orders = hol_timeline.orders();
    println!("HOL base makespan = {} ms", hol_timeline.makespan / 1000);
    println!("HOL stage0 order: {:?}", hol_orders[0].iter().map(|o| format!("{}{}", o.kind, o.mb)).collect::<Vec<_>>());
    println!("HOL stage1 order: {:?}", hol_orders[1].iter().map(|o| format!("{}{}", o.kind, o.mb)).collect::<Vec<_>>());
    let injected = hol_spec.clone().with_comm(vec![ms(30)]);
    let dec = replay(&injected, &hol_orders, CommModel::Decoupled).unwrap();
    let seq1 = replay(&injected, &hol_orders, CommModel::sequential(1)).unwrap();
    let seq4 = replay(&injected, &hol_orders, CommModel::sequential(4)).unwrap();
    println!(
        "HOL decoupled = {} ms, seq1 = {} ms, seq4 = {} ms",
        dec.timeline.makespan / 1000,
        seq1.timeline.makespan / 1000,
        seq4.timeline.makespan / 1000
    );

    // accumulated delay spot checks
    let acc10 = accumulated_delay(&spec.clone().with_comm(vec![ms(10), 0, 0]), &orders, CommModel::Decoupled).unwrap();
    let acc20 = accumulated_delay(&spec.clone().with_comm(vec![ms(20), 0, 0]), &orders, CommModel::Decoupled).unwrap();
    println!("acc(c=10) = {} ms, acc(c=20) = {} ms", acc10 / 1000, acc20 / 1000);
}
